"""Decomposition of an LP trajectory against the reference dynamics.

With theta = int_0^t E and m = ||psi_0||_2,

    alpha = m^{-2} <Q, e^{i theta/eps} psi>,   R = e^{i theta/eps} psi - alpha Q,
    R~ = R - i eps alpha chi,                   W = phi - V,

and the control functions are running suprema

    M1 = sup eps^{-1} ||R~||_2,
    M2 = sup eps^{-1} max{1, (eps/s)^{1/2}}^{-1} ||R~||_inf,
    M3 = sup eps^{-1} (eps + min{(eps/s)^{1/2}, (eps/s)^{3/2}})^{-1} ||<x>^{-1} R~||_inf.

At s = 0 the weights of M2 and M3 vanish.  Reference quantities are cubically
interpolated to LP time stamps; theta is re-accumulated at LP resolution.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import LPParams, LPRun, PolaronState, evolve_lp
from .errors import HorizonMismatch, InsufficientSamples
from .grid import Grid
from .reference import ReferenceTrajectory

__all__ = [
    "Decomposer",
    "DecompositionSeries",
    "ScalingReport",
    "EnvelopeVerdict",
    "decompose",
    "run_decomposition",
    "control_functions",
    "alpha_residual_check",
    "alpha_rate_envelope",
    "rate_envelope",
    "scaling_fit",
    "loglog_slope",
    "sup_oversampled",
]


def sup_oversampled(grid: Grid, f, factor: int = 1) -> float:
    """max |f| on the grid, or on a ``factor``-times finer mesh by trigonometric
    interpolation."""
    if factor <= 1:
        return float(np.max(np.abs(f)))
    F = np.fft.fft(f)
    n = grid.N
    G = np.zeros(n * factor, dtype=complex)
    G[: n // 2] = F[: n // 2]
    G[-(n // 2) :] = F[-(n // 2) :]
    return float(np.max(np.abs(np.fft.ifft(G))) * factor)


@dataclass
class DecompositionSeries:
    """Per LP stamp diagnostics; see the module docstring for the definitions.

    ``alpha_rhs`` is the right side m^{-2}(<dQ/dt, R> - i eps^{-1} <Q, W(alpha Q + R)>)
    of the alpha equation evaluated at each stamp.  ``dW_mismatch`` compares a
    centered difference of W with phi_dot - dV/dt at the previous stamp.
    """

    epsilon: float
    mass: float
    t: np.ndarray
    alpha: np.ndarray
    nR_l2: np.ndarray
    nRt_l2: np.ndarray
    nRt_linf: np.ndarray
    nRt_winf: np.ndarray
    nW_l2: np.ndarray
    dW_l2: np.ndarray
    psi_err: np.ndarray
    q_r_overlap: np.ndarray
    q_rt_overlap: np.ndarray
    alpha_rhs: np.ndarray
    dW_mismatch: np.ndarray
    chi0_l2: float = float("nan")

    @property
    def dalpha2(self) -> np.ndarray:
        """|d/dt |alpha|^2| by second-order finite differences."""
        return np.abs(np.gradient(np.abs(self.alpha) ** 2, self.t, edge_order=2))

    @property
    def dalpha(self) -> np.ndarray:
        return np.gradient(self.alpha, self.t, edge_order=2)

    @property
    def one_minus_alpha2(self) -> np.ndarray:
        return 1.0 - np.abs(self.alpha) ** 2

    @property
    def field_error(self) -> np.ndarray:
        return self.nW_l2 + self.dW_l2

    def control(self):
        return control_functions(self.t, self.epsilon, self.nRt_l2, self.nRt_linf, self.nRt_winf)

    def write_csv(self, path) -> Path:
        path = Path(path)
        M1, M2, M3 = self.control()
        cols = [
            self.t,
            self.alpha.real,
            self.alpha.imag,
            self.nR_l2,
            self.nRt_l2,
            self.nRt_linf,
            self.nRt_winf,
            self.nW_l2,
            self.dW_l2,
            self.dalpha2,
            M1,
            M2,
            M3,
        ]
        names = "t re_alpha im_alpha nR_l2 nRt_l2 nRt_linf nRt_winf nW_l2 dW_l2 dalpha2 M1 M2 M3".split()
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for row in zip(*cols):
                w.writerow([repr(float(v)) for v in row])
        return path

    def sup(self, name: str) -> float:
        if name in ("M1", "M2", "M3"):
            return float(self.control()[int(name[1]) - 1][-1])
        return float(np.max(np.abs(getattr(self, name))))


def control_functions(t, eps, nRt_l2, nRt_linf, nRt_winf):
    """Running suprema M1, M2, M3 (see the module docstring)."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        r = np.where(t > 0, eps / np.where(t > 0, t, 1.0), np.inf)
    w2 = np.where(np.isinf(r), 0.0, 1.0 / np.maximum(1.0, np.sqrt(r)))
    small = np.minimum(np.sqrt(r), r**1.5)
    w3 = np.where(np.isinf(r), 0.0, 1.0 / (eps + small))
    M1 = np.maximum.accumulate(np.asarray(nRt_l2) / eps)
    M2 = np.maximum.accumulate(w2 * np.asarray(nRt_linf) / eps)
    M3 = np.maximum.accumulate(w3 * np.asarray(nRt_winf) / eps)
    return M1, M2, M3


class Decomposer:
    """Streaming decomposition: call with consecutive LP states (constant step)."""

    def __init__(self, ref: ReferenceTrajectory, epsilon: float, *, oversample: int = 1, T: float | None = None):
        if ref.chi is None:
            raise ValueError("reference trajectory lacks chi; run chi_and_rate first")
        if T is not None and T > ref.T + 1e-9:
            raise HorizonMismatch(f"LP horizon {T:g} exceeds reference horizon {ref.T:g}")
        self.ref = ref
        self.eps = float(epsilon)
        self.oversample = int(oversample)
        self.g = ref.grid
        self.m2 = ref.mass**2
        self.rows: list[tuple] = []
        self._theta = 0.0
        self._last = None  # (t, E)
        self._hist: list = []  # last two (t, W, W_dot)

    def __call__(self, st: PolaronState) -> None:
        g, eps, ref = self.g, self.eps, self.ref
        if st.grid != g:
            raise HorizonMismatch("LP and reference grids differ")
        s = ref.at(st.t)
        Q = s.Q * (ref.mass / g.l2(s.Q))
        if self._last is None:
            self._theta = float(np.interp(st.t, ref.times, ref.theta)) if st.t > 0 else 0.0
        else:
            t0, E0 = self._last
            self._theta += 0.5 * (st.t - t0) * (E0 + s.E)
        self._last = (st.t, s.E)
        u = np.exp(1j * self._theta / eps) * st.psi
        alpha = g.inner(Q, u) / self.m2
        R = u - alpha * Q
        Rt = R - 1j * eps * alpha * s.chi
        W = st.phi - s.V
        W_dot = st.phi_dot - s.V_dot
        rhs = (g.inner(s.dQ_dt, R) - 1j / eps * g.inner(Q, W * (alpha * Q + R))) / self.m2

        mismatch = np.nan
        self._hist.append((st.t, W, W_dot))
        if len(self._hist) == 3:
            (ta, Wa, _), (_, _, Wdb), (tc, Wc, _) = self._hist
            mismatch = g.l2((Wc - Wa) / (tc - ta) - Wdb)
            self._hist.pop(0)

        self.rows.append(
            (
                st.t,
                alpha,
                g.l2(R),
                g.l2(Rt),
                sup_oversampled(g, Rt, self.oversample),
                sup_oversampled(g, Rt / g.bracket, self.oversample),
                g.l2(W),
                g.l2(W_dot),
                g.l2(u - Q),
                abs(g.inner(Q, R)),
                abs(g.inner(Q, Rt)),
                rhs,
                mismatch,
                g.l2(s.chi) if not self.rows else np.nan,
            )
        )

    def series(self) -> DecompositionSeries:
        if not self.rows:
            raise InsufficientSamples("no LP states were decomposed")
        cols = list(zip(*self.rows))
        arr = [np.array(c) for c in cols]
        # the mismatch of the stamp before the last one is known one call late
        mism = np.concatenate([arr[12][1:], [np.nan]])
        return DecompositionSeries(
            self.eps,
            self.ref.mass,
            arr[0].astype(float),
            arr[1].astype(complex),
            *[a.astype(float) for a in arr[2:11]],
            arr[11].astype(complex),
            mism.astype(float),
            float(arr[13][0]),
        )


def decompose(lp_run, ref: ReferenceTrajectory, epsilon: float, *, oversample: int = 1) -> DecompositionSeries:
    """Decompose the stored states of an LP run (``LPRun.snapshots`` or any
    sequence of :class:`PolaronState`)."""
    states = lp_run.snapshots if isinstance(lp_run, LPRun) else list(lp_run)
    if not states:
        raise InsufficientSamples("LP run stores no states; use store_every=1 or run_decomposition")
    T = states[-1].t
    dec = Decomposer(ref, epsilon, oversample=oversample, T=T)
    for st in states:
        dec(st)
    return dec.series()


def run_decomposition(
    initial: PolaronState,
    ref: ReferenceTrajectory,
    params: LPParams,
    T: float = 1.0,
    *,
    oversample: int = 1,
):
    """Evolve LP from ``initial`` and decompose every step on the fly.

    Returns (LPRun, DecompositionSeries).
    """
    dec = Decomposer(ref, params.epsilon, oversample=oversample, T=T)
    run = evolve_lp(initial, params, T, observer=dec)
    return run, dec.series()


def alpha_residual_check(series: DecompositionSeries) -> dict:
    """|centered difference of alpha - right side of the alpha equation| per stamp.

    Returns the residual series and its sup together with sup |d alpha/dt|.
    """
    if len(series.t) < 3:
        raise InsufficientSamples("need at least 3 alpha samples")
    lhs = series.dalpha
    res = np.abs(lhs - series.alpha_rhs)
    return {
        "residual": res,
        "sup_residual": float(np.max(res)),
        "sup_dalpha": float(np.max(np.abs(lhs))),
        "ratio": float(np.max(res) / max(np.max(np.abs(lhs)), 1e-300)),
    }


def rate_envelope(t, eps) -> np.ndarray:
    """eps for t <= eps, eps (eps/t)^{3/2} up to eps^{1/3}, eps^2 afterwards."""
    t = np.asarray(t, dtype=float)
    mid = eps * (eps / np.maximum(t, eps)) ** 1.5
    return np.where(t <= eps, eps, np.where(t <= eps ** (1.0 / 3.0), mid, eps**2))


@dataclass
class EnvelopeVerdict:
    C: float
    C_early: float
    C_middle: float
    C_late: float


def alpha_rate_envelope(t, dalpha2, eps) -> EnvelopeVerdict:
    """Smallest C with |d/dt |alpha|^2| <= C * envelope(t), overall and per regime."""
    t = np.asarray(t, dtype=float)
    ratio = np.abs(np.asarray(dalpha2, dtype=float)) / rate_envelope(t, eps)
    early = t <= eps
    late = t >= eps ** (1.0 / 3.0)
    middle = ~early & ~late

    def mx(mask):
        return float(np.max(ratio[mask])) if np.any(mask) else 0.0

    return EnvelopeVerdict(float(np.max(ratio)), mx(early), mx(middle), mx(late))


def loglog_slope(x, y) -> tuple[float, float]:
    """Least-squares (slope, intercept) of log y against log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise InsufficientSamples("log-log fit needs at least 2 positive samples")
    p, c = np.polyfit(np.log(x), np.log(y), 1)
    return float(p), float(c)


@dataclass
class ScalingReport:
    observable: str
    epsilons: list
    values: list
    slope: float
    expected: tuple
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


# observable -> (accessor name, accepted slope window)
SCALING_TARGETS = {
    "psi_error": ("psi_err", (0.8, 1.2)),
    "field_error": ("field_error", (1.7, 2.3)),
    "W_l2": ("nW_l2", (1.7, 2.3)),
    "dW_l2": ("dW_l2", (1.7, 2.3)),
    "one_minus_alpha2": ("one_minus_alpha2", (1.7, 2.3)),
    "M1": ("M1", (-0.3, 0.3)),
    "M2": ("M2", (-0.3, 0.3)),
    "M3": ("M3", (-0.3, 0.3)),
}


def scaling_fit(series_list, targets=None) -> list[ScalingReport]:
    """Log-log slopes against epsilon of the sup-in-t value of each observable."""
    series_list = sorted(series_list, key=lambda s: -s.epsilon)
    eps = [s.epsilon for s in series_list]
    if len(eps) < 3:
        raise InsufficientSamples("scaling fits need at least 3 epsilon values")
    if len(set(eps)) != len(eps):
        raise ValueError("epsilon values must be distinct")
    out = []
    for name, (attr, window) in (targets or SCALING_TARGETS).items():
        vals = [s.sup(attr) for s in series_list]
        slope, _ = loglog_slope(eps, vals)
        out.append(ScalingReport(name, eps, vals, slope, window, bool(window[0] <= slope <= window[1])))
    return out


def write_scaling_json(reports, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps([r.to_dict() for r in reports], indent=2))
    return path
