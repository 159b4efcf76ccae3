import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import lp_lab.cli as cli
from lp_lab.config import DEFAULTS, config_from_dict, parse_config
from lp_lab.errors import NumericalFailure, ParseError, ValidationError
from lp_lab.grid import Field, Grid

SMALL = {"grid": {"L": 20.0, "N": 512}, "T": 0.1, "epsilons": [0.1]}


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return p


def test_minimal_config_gets_defaults(tmp_path):
    doc = {"grid": {"L": 40, "N": 4096}, "preset": {"poschl_teller": {"a": 1.5}}, "epsilons": [0.1], "T": 1, "kind": "evolve"}
    cfg = parse_config(write(tmp_path, doc))
    assert cfg.kind == "evolve" and cfg.epsilons == [0.1]
    assert cfg.preset == {"poschl_teller": {"a": 1.5, "kick": 0.2}}
    assert cfg.c_psi == DEFAULTS["c_psi"] and cfg.dt_ref == DEFAULTS["dt_ref"]
    assert cfg.tolerances == DEFAULTS["tolerances"]
    assert cfg.source == str(tmp_path / "cfg.json")


def test_power_of_two(tmp_path):
    with pytest.raises(ValidationError, match="N must be a power of two"):
        parse_config(write(tmp_path, {"grid": {"L": 40, "N": 1000}}))


@pytest.mark.parametrize("doc", [{"foo": 1}, {"grid": {"M": 3}}, {"preset": {"gauss": {}}}, {"preset": {"poschl_teller": {"depth": 2}}}])
def test_unknown_keys(tmp_path, doc):
    with pytest.raises(ParseError):
        parse_config(write(tmp_path, doc))


def test_bad_json_reports_position(tmp_path):
    with pytest.raises(ParseError, match="line 2"):
        parse_config(write(tmp_path, '{"T": 1,\n  "kind": }'))


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        parse_config(tmp_path / "nope.json")


@pytest.mark.parametrize(
    "doc, field",
    [
        ({"epsilons": [0.1, 1.5]}, "epsilons"),
        ({"epsilons": []}, "epsilons"),
        ({"T": 0}, "T"),
        ({"T": -1}, "T"),
        ({"tolerances": {"ref_tol": 0}}, "ref_tol"),
        ({"kind": "plot"}, "kind"),
        ({"workers": 0}, "workers"),
        ({"c_psi": 0.1}, "c_psi"),
        ({"dispersive": {"N": 100}}, "dispersive.N"),
        ({"mass": "one"}, "mass"),
    ],
)
def test_validation_names_field(doc, field):
    with pytest.raises(ValidationError, match=field):
        config_from_dict(doc)


@given(st.integers(1, 1 << 16))
def test_N_accepted_iff_power_of_two(N):
    ok = N >= 256 and N & (N - 1) == 0
    try:
        config_from_dict({"grid": {"L": 10.0, "N": N}})
        assert ok
    except ValidationError:
        assert not ok


def test_file_preset(tmp_path):
    g = Grid(20.0, 512)
    Field(g, -1.5 / np.cosh(g.x) ** 2).save(tmp_path / "phi0.bin")
    Field(g, np.zeros(g.N)).to_csv(tmp_path / "phi_dot0.csv")
    cfg = config_from_dict({"preset": {"file": {"phi0": str(tmp_path / "phi0.bin"), "phi_dot0": str(tmp_path / "phi_dot0.csv")}}})
    data = cli.build_initial_data(cfg)
    assert data.grid == g
    assert data.E0 == pytest.approx(-((np.sqrt(7) - 1) / 2) ** 2, abs=1e-6)


# -- CLI -------------------------------------------------------------------


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def test_exit_validation(tmp_path, capsys):
    assert run_cli("evolve", "--config", write(tmp_path, {"grid": {"L": 40, "N": 1000}}), "--out", tmp_path) == 2
    assert "power of two" in capsys.readouterr().err


def test_exit_unknown_key(tmp_path):
    assert run_cli("evolve", "--config", write(tmp_path, {"foo": 1}), "--out", tmp_path) == 2


def test_exit_numerical_failure(tmp_path):
    doc = dict(SMALL, preset={"poschl_teller": {"a": 2.0}})
    assert run_cli("reference", "--config", write(tmp_path, doc), "--out", tmp_path / "o") == 3
    manifest = json.loads((tmp_path / "o" / "reference" / "manifest.json").read_text())
    assert any(s["status"] == "failed" for s in manifest["stages"])


def test_reference_outputs(tmp_path):
    assert run_cli("reference", "--config", write(tmp_path, SMALL), "--out", tmp_path) == 0
    out = tmp_path / "reference"
    for name in ("times.csv", "tstar.json", "manifest.json", "config.json", "snapshots/Q_000000.bin", "snapshots/chi_000100.bin"):
        assert (out / name).exists(), name
    assert json.loads((out / "tstar.json").read_text())["horizon_reached"] is True
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["files"]) == {str(p.relative_to(out)) for p in out.rglob("*") if p.is_file() and p.name != "manifest.json"}


def test_output_root_precedence(tmp_path, monkeypatch):
    cfg = write(tmp_path, dict(SMALL, out=str(tmp_path / "from_config")))
    monkeypatch.setenv("LP_LAB_OUT", str(tmp_path / "from_env"))
    assert run_cli("evolve", "--config", cfg) == 0
    assert (tmp_path / "from_env" / "evolve" / "manifest.json").exists()
    assert run_cli("evolve", "--config", cfg, "--out", tmp_path / "from_flag") == 0
    assert (tmp_path / "from_flag" / "evolve" / "manifest.json").exists()
    monkeypatch.delenv("LP_LAB_OUT")
    assert run_cli("evolve", "--config", cfg) == 0
    assert (tmp_path / "from_config" / "evolve" / "manifest.json").exists()


def test_deterministic_outputs(tmp_path):
    cfg = write(tmp_path, SMALL)
    hashes = []
    for run in ("a", "b"):
        assert run_cli("evolve", "--config", cfg, "--out", tmp_path / run) == 0
        m = json.loads((tmp_path / run / "evolve" / "manifest.json").read_text())
        hashes.append({k: v for k, v in m["files"].items() if k.endswith((".csv", ".bin"))})
    assert hashes[0] and hashes[0] == hashes[1]


def test_sweep_pipeline(tmp_path):
    doc = dict(SMALL, epsilons=[0.1, 0.05, 0.025], T=0.2)
    assert run_cli("sweep", "--config", write(tmp_path, doc), "--out", tmp_path, "--workers", 2) == 0
    out = tmp_path / "sweep"
    reports = json.loads((out / "scaling.json").read_text())
    assert reports[0]["observable"] == "psi_error" and len(reports[0]["values"]) == 3
    for e in ("0.1", "0.05", "0.025"):
        assert (out / f"eps_{e}" / "series.csv").exists()
    assert (out / "scaling.svg").read_text().startswith("<svg")


def test_crash_isolation(tmp_path, monkeypatch):
    real = cli._decompose_one

    def flaky(cfg, data, ref, eps, out):
        if eps == 0.05:
            raise NumericalFailure("injected")
        return real(cfg, data, ref, eps, out)

    monkeypatch.setattr(cli, "_decompose_one", flaky)
    cfg = config_from_dict(dict(SMALL, kind="decompose", epsilons=[0.1, 0.05]))
    with pytest.raises(NumericalFailure):
        cli.run_experiment(cfg, tmp_path)
    out = tmp_path / "decompose"
    stages = {s["name"]: s for s in json.loads((out / "manifest.json").read_text())["stages"]}
    assert stages["decompose[0.1]"]["status"] == "ok"
    assert stages["decompose[0.05]"]["status"] == "failed" and "injected" in stages["decompose[0.05]"]["error"]
    assert (out / "eps_0.1" / "series.csv").exists()


@pytest.mark.parametrize("kind, files", [("adiabatic", ["adiabatic.json", "adiabatic_eps_0.1.csv"]), ("dispersive", ["norms.csv", "decay_fit.json", "decay.svg"])])
def test_linear_pipelines(tmp_path, kind, files):
    doc = {
        "grid": {"L": 20.0, "N": 512},
        "epsilons": [0.1, 0.05],
        "T": 0.2,
        "adiabatic": {"dt_path": 1e-2},
        "dispersive": {"L": 320.0, "N": 8192, "T": 0.5, "epsilon": 0.05},
    }
    assert run_cli(kind, "--config", write(tmp_path, doc), "--out", tmp_path) == 0
    for f in files:
        assert (tmp_path / kind / f).exists(), f


def test_dispersive_box_too_small(tmp_path, capsys):
    doc = {"dispersive": {"L": 40.0, "N": 1024, "T": 0.4, "epsilon": 0.05}}
    assert run_cli("dispersive", "--config", write(tmp_path, doc), "--out", tmp_path) == 3
    assert "empty decay window" in capsys.readouterr().err
