"""Command line interface and experiment orchestration.

    lp-lab {reference,evolve,decompose,adiabatic,dispersive,sweep} [--config PATH]
           [--out DIR] [--workers K] [--verbose]

Exit status: 0 on success, 2 for configuration errors, 3 for numerical failures.
The output root is --out if given, else $LP_LAB_OUT, else the config's ``out``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import multiprocessing as mp
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .adiabatic import AdiabaticPath, adiabatic_bound_check
from .config import KINDS, ExperimentConfig, config_from_dict, parse_config
from .decomposition import loglog_slope, run_decomposition, scaling_fit, write_scaling_json
from .dispersive import WINF_M1, evolve_projected, measure_decay
from .dynamics import LPParams, evolve_lp
from .errors import AssumptionViolated, ConfigError, LPLabError, NumericalFailure
from .grid import LINF, Field, Grid
from .plots import line_plot
from .presets import InitialData, bump, poschl_teller, sech2_well, translated_well
from .reference import chi_and_rate, check_assumption, march_reference, monitor_tstar
from .spectral import ground_state

__all__ = ["RunManifest", "run_experiment", "main", "build_initial_data"]

log = logging.getLogger("lp_lab")


@dataclass
class RunManifest:
    config: dict
    version: str
    start: float
    end: float | None = None
    stages: list = field(default_factory=list)
    files: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(s["status"] == "ok" for s in self.stages)

    def write(self, directory: Path) -> Path:
        path = Path(directory) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True))
        return path


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _eps_tag(eps: float) -> str:
    return f"eps_{eps:g}"


def build_initial_data(cfg: ExperimentConfig) -> InitialData:
    tol = cfg.tolerances
    if cfg.preset_name == "poschl_teller":
        grid = Grid(cfg.grid["L"], cfg.grid["N"])
        p = cfg.preset_params
        return poschl_teller(grid, p["a"], p["kick"], cfg.mass, tol["ref_tol"])
    p = cfg.preset_params

    def load(path):
        path = Path(path)
        return Field.from_csv(path) if path.suffix == ".csv" else Field.load(path)

    f0, f1 = load(p["phi0"]), load(p["phi_dot0"])
    if f0.grid != f1.grid:
        raise ConfigError("phi0 and phi_dot0 files use different grids")
    phi0 = np.real(f0.values).astype(float)
    phi_dot0 = np.real(f1.values).astype(float)
    gs = ground_state(f0.grid, phi0, cfg.mass, tol["ref_tol"], gap_tol=tol["gap_tol"])
    return InitialData(f0.grid, phi0, phi_dot0, cfg.mass, gs)


class _Stages:
    def __init__(self, manifest: RunManifest):
        self.manifest = manifest

    def run(self, name, fn, *args, **kw):
        t0 = time.time()
        rec = {"name": name, "status": "ok", "seconds": 0.0}
        self.manifest.stages.append(rec)
        try:
            return fn(*args, **kw)
        except LPLabError as exc:
            rec["status"] = "failed"
            rec["error"] = f"{type(exc).__name__}: {exc}"
            raise
        finally:
            rec["seconds"] = round(time.time() - t0, 3)


# -- pipelines ----------------------------------------------------------------


def _reference(cfg, data, out: Path):
    tol = cfg.tolerances
    ref = march_reference(
        data.grid, data.phi0, data.phi_dot0, cfg.mass, cfg.dt_ref, cfg.T,
        ref_tol=tol["ref_tol"], rho_tol=tol["rho_tol"], gap_tol=tol["gap_tol"],
    )
    chi_and_rate(ref)
    return ref


def _write_reference(cfg, ref, out: Path):
    ref.save(out, stride=cfg.checkpoint_stride)
    rep = monitor_tstar(ref, rho_tol=cfg.tolerances["rho_tol"])
    doc = {
        "horizon_reached": rep.horizon_reached,
        "first_violation_time": rep.first_violation_time,
        "violation_kind": rep.violation_kind,
        "rho_min": rep.rho_min,
        "max_eigen_residual": float(np.max(ref.residual)),
        "chi_diagnostics": ref.chi_diagnostics,
    }
    (out / "tstar.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    line_plot(out / "energy.svg", [(ref.times, ref.E, "E(t)")], title="ground energy of the reference potential", xlabel="t", ylabel="E")
    return rep


def _evolve_one(cfg, data, eps, out: Path):
    params = LPParams.from_ratio(eps, cfg.c_psi, absorb=cfg.absorb)
    n = int(round(cfg.T / params.dt))
    stride = cfg.checkpoint_stride
    params = replace(params, checkpoints=tuple(k * params.dt for k in range(0, n + 1, stride)))
    run = evolve_lp(data.state(), params, cfg.T)
    out.mkdir(parents=True, exist_ok=True)
    run.write_diagnostics(out / "diagnostics.csv")
    run.write_checkpoints(out / "checkpoints")
    e0 = run.energy[0]
    line_plot(out / "energy_drift.svg", [(run.times, np.abs(run.energy - e0) / abs(e0), "relative energy drift")],
              title=f"LP energy drift, eps={eps:g}", xlabel="t", ylabel="|E(t)-E(0)|/|E(0)|")
    return run


# state inherited by forked workers
_SHARED: dict = {}


def _decompose_task(eps):
    cfg, data, ref, out = _SHARED["cfg"], _SHARED["data"], _SHARED["ref"], _SHARED["out"]
    try:
        return eps, _decompose_one(cfg, data, ref, eps, out / _eps_tag(eps)), None
    except LPLabError as exc:
        return eps, None, f"{type(exc).__name__}: {exc}"


def _decompose_one(cfg, data, ref, eps, out: Path):
    params = LPParams.from_ratio(eps, cfg.c_psi, absorb=cfg.absorb)
    run, series = run_decomposition(data.state(), ref, params, cfg.T)
    out.mkdir(parents=True, exist_ok=True)
    run.write_diagnostics(out / "diagnostics.csv")
    series.write_csv(out / "series.csv")
    line_plot(out / "alpha.svg", [(series.alpha.real, series.alpha.imag, "alpha(t)")],
              title=f"alpha trajectory, eps={eps:g}", xlabel="Re alpha", ylabel="Im alpha")
    return series


def _decompose_all(cfg, data, ref, out: Path, stages: _Stages, workers: int):
    _SHARED.update(cfg=cfg, data=data, ref=ref, out=out)
    eps_list = list(cfg.epsilons)
    if workers > 1 and len(eps_list) > 1 and "fork" in mp.get_all_start_methods():
        with ProcessPoolExecutor(min(workers, len(eps_list)), mp_context=mp.get_context("fork")) as ex:
            results = list(ex.map(_decompose_task, eps_list))
    else:
        results = [_decompose_task(e) for e in eps_list]
    series = []
    for eps, s, err in results:
        rec = {"name": f"decompose[{eps:g}]", "status": "ok" if err is None else "failed", "seconds": None}
        if err is not None:
            rec["error"] = err
        else:
            series.append(s)
        stages.manifest.stages.append(rec)
    return series


def _scaling(series, out: Path):
    reports = scaling_fit(series)
    write_scaling_json(reports, out / "scaling.json")
    eps = np.array(reports[0].epsilons)
    curves = [(eps, np.array(r.values), f"{r.observable} (slope {r.slope:.2f})") for r in reports if r.observable in ("psi_error", "field_error", "M1", "M2", "M3")]
    line_plot(out / "scaling.svg", curves, title="sup over t against epsilon", xlabel="eps", ylabel="value", logx=True, logy=True, markers=True)
    return reports


def _adiabatic(cfg, out: Path):
    a = cfg.adiabatic
    grid = Grid(cfg.grid["L"], cfg.grid["N"])
    path = AdiabaticPath(grid, translated_well(grid, a["depth"], a["amplitude"]), cfg.T, a["dt_path"],
                         tol=cfg.tolerances["ref_tol"], gap_tol=cfg.tolerances["gap_tol"])
    path.compute_xi()
    summary = []
    curves = []
    for eps in cfg.epsilons:
        rep = adiabatic_bound_check(path, eps, cfg.c_psi * eps)
        rep.write_csv(out / f"adiabatic_{_eps_tag(eps)}.csv")
        summary.append({
            "epsilon": eps,
            "sup_lhs": float(rep.lhs_l2.max()),
            "max_ratio": float(rep.ratio.max()),
            "bound_holds": rep.holds(0.1),
            "sup_energy": float(rep.energy_lhs.max()),
        })
        curves += [(rep.t, rep.lhs_l2, f"lhs eps={eps:g}"), (rep.t, rep.rhs_l2, f"rhs eps={eps:g}")]
    doc = {"runs": summary}
    if len(summary) >= 2:
        eps = [s["epsilon"] for s in summary]
        doc["energy_slope"] = loglog_slope(eps, [s["sup_energy"] for s in summary])[0]
        doc["lhs_slope"] = loglog_slope(eps, [s["sup_lhs"] for s in summary])[0]
    (out / "adiabatic.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    line_plot(out / "adiabatic.svg", curves, title="adiabatic error and bound", xlabel="t", ylabel="L2", logy=True)
    return doc


def _dispersive(cfg, out: Path):
    d = cfg.dispersive
    grid = Grid(d["L"], d["N"])
    V0 = sech2_well(grid, d["depth"])
    path = AdiabaticPath(grid, lambda t: V0, d["T"], deflate=True, static=True,
                         tol=cfg.tolerances["ref_tol"], gap_tol=cfg.tolerances["gap_tol"])
    eps = d["epsilon"]
    run = evolve_projected(path, bump(grid), eps, cfg.c_psi * eps, d["T"], store_every=0,
                           absorb=cfg.absorb, rho_tol=cfg.tolerances["rho_tol"])
    run.write_csv(out / "norms.csv")
    weighted = measure_decay(run, WINF_M1)
    early = measure_decay(run, LINF, (5 * eps, 10 * eps))
    doc = {"weighted": asdict(weighted), "unweighted_early": asdict(early)}
    (out / "decay_fit.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    line_plot(out / "decay.svg", [(run.t[1:], run.winf_m1[1:], "||<x>^-1 psi~||_inf"), (run.t[1:], run.linf[1:], "||psi~||_inf")],
              title=f"dispersive decay, eps={eps:g}", xlabel="t", ylabel="norm", logx=True, logy=True)
    return doc


def run_experiment(cfg: ExperimentConfig, out_root=None, workers: int | None = None) -> RunManifest:
    """Execute ``cfg.kind`` and write outputs plus manifest.json under
    ``out_root/<kind>``.  Stage failures are recorded in the manifest and the
    first one is re-raised after the manifest is written."""
    root = Path(out_root if out_root is not None else cfg.out)
    out = root / cfg.kind
    out.mkdir(parents=True, exist_ok=True)
    workers = workers or cfg.workers
    manifest = RunManifest(cfg.to_dict(), __version__, time.time())
    stages = _Stages(manifest)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    error = None
    try:
        if cfg.kind in ("reference", "evolve", "decompose", "sweep"):
            data = stages.run("initial_data", build_initial_data, cfg)
            kind = check_assumption(data.grid, data.phi0, cfg.tolerances["rho_tol"])
            if kind is not None and cfg.kind != "evolve":
                stages.run("assumption", _raise, AssumptionViolated(f"initial potential violates the assumption: {kind}"))
        if cfg.kind == "reference":
            ref = stages.run("reference", _reference, cfg, data, out)
            stages.run("tstar", _write_reference, cfg, ref, out)
        elif cfg.kind == "evolve":
            for eps in cfg.epsilons:
                stages.run(f"evolve[{eps:g}]", _evolve_one, cfg, data, eps, out / _eps_tag(eps))
        elif cfg.kind in ("decompose", "sweep"):
            ref = stages.run("reference", _reference, cfg, data, out)
            series = _decompose_all(cfg, data, ref, out, stages, workers)
            if cfg.kind == "sweep":
                stages.run("scaling_fit", _scaling, series, out)
        elif cfg.kind == "adiabatic":
            stages.run("adiabatic", _adiabatic, cfg, out)
        elif cfg.kind == "dispersive":
            stages.run("dispersive", _dispersive, cfg, out)
    except LPLabError as exc:
        error = exc
    manifest.end = time.time()
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            manifest.files[str(p.relative_to(out))] = _sha256(p)
    manifest.write(out)
    if error is not None:
        raise error
    failed = [s for s in manifest.stages if s["status"] != "ok"]
    if failed:
        raise NumericalFailure(f"{len(failed)} stage(s) failed: " + "; ".join(s.get("error", s["name"]) for s in failed))
    return manifest


def _raise(exc):
    raise exc


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="lp-lab", description="Landau-Pekar simulation and verification suite")
    ap.add_argument("command", choices=KINDS)
    ap.add_argument("--config", help="JSON configuration file (defaults are used when omitted)")
    ap.add_argument("--out", help="output root directory")
    ap.add_argument("--workers", type=int, help="concurrent runs in a sweep")
    ap.add_argument("--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = parse_config(args.config)
            cfg = replace(cfg, kind=args.command)
        else:
            cfg = config_from_dict({"kind": args.command})
        if args.workers is not None and args.workers < 1:
            raise ConfigError("--workers must be positive")
        out_root = args.out or os.environ.get("LP_LAB_OUT") or cfg.out
        manifest = run_experiment(cfg, out_root, args.workers)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(Path(out_root) / cfg.kind)
    log.info("finished %d stages", len(manifest.stages))
    return 0


if __name__ == "__main__":
    sys.exit(main())
