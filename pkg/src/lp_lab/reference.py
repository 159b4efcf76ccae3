"""The epsilon-free reference dynamics (Q, V, E).

For t below the first time T* at which the ground state of -d^2/dx^2 + V stops
being the unique, non-resonant negative eigenvalue, the triple solves

    -d_t^2 V = V + Q^2 / 2,     (-d^2/dx^2 + V) Q = E Q,     ||Q||_2 = ||psi_0||_2,

with V(0) = phi_0, d_t V(0) = phi_dot_0.  Variation of constants gives

    V(t) = phi_0 cos t + phi_dot_0 sin t - 1/2 int_0^t sin(t - s) Q_s^2 ds
         = phi_0 cos t + phi_dot_0 sin t - 1/2 (sin t A(t) - cos t B(t)),

with A = int_0^t Q^2 cos s ds and B = int_0^t Q^2 sin s ds.  The kernel
vanishes at s = t, so when A and B are advanced by the trapezoid rule the
contribution of the newest sample cancels from V: V(t_{n+1}) only depends on
Q(t_0..t_n) and the march is explicit.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import AssumptionViolated, HorizonMismatch, NoConvergence, NoNegativeEigenvalue
from .grid import Field, Grid
from .spectral import (
    DEFAULT_GAP_TOL,
    DEFAULT_RHO_TOL,
    constrained_resolvent_solve,
    ground_state,
    spectral_report,
)

__all__ = [
    "ReferenceTrajectory",
    "ReferenceSample",
    "TStarReport",
    "march_reference",
    "chi_and_rate",
    "monitor_tstar",
    "direct_convolution",
    "field_equation_residual",
    "check_assumption",
]

log = logging.getLogger(__name__)

# eigensolver hook: (V, previous Q) -> (E, Q, residual)
Eigensolver = Callable[[np.ndarray, np.ndarray], tuple]


@dataclass
class ReferenceSample:
    """Reference quantities interpolated to one time."""

    t: float
    Q: np.ndarray
    V: np.ndarray
    V_dot: np.ndarray
    E: float
    chi: np.ndarray | None
    dQ_dt: np.ndarray | None


@dataclass
class ReferenceTrajectory:
    """Stored reference dynamics on the uniform mesh t_n = n dt_ref.

    ``V_dot`` is the exact time derivative of the trapezoid representation of V,
    -phi_0 sin t + phi_dot_0 cos t - (cos t A + sin t B) / 2.  ``chi``,
    ``dQ_dt`` and ``theta`` stay ``None`` until :func:`chi_and_rate` runs.
    """

    grid: Grid
    dt_ref: float
    times: np.ndarray
    Q: np.ndarray
    V: np.ndarray
    V_dot: np.ndarray
    E: np.ndarray
    residual: np.ndarray
    mass: float
    A: np.ndarray
    B: np.ndarray
    chi: np.ndarray | None = None
    dQ_dt: np.ndarray | None = None
    theta: np.ndarray | None = None
    chi_diagnostics: dict = field(default_factory=dict)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return len(self.times)

    def _stencil(self, t: float):
        """Indices and Lagrange weights of the 4-point cubic interpolant at t."""
        n = len(self.times) - 1
        if t < -1e-12 or t > self.T + 1e-9 * max(1.0, self.T):
            raise HorizonMismatch(f"t = {t:g} outside the reference horizon [0, {self.T:g}]")
        if n < 3:
            raise HorizonMismatch("cubic interpolation needs at least 4 reference samples")
        s = min(max(t / self.dt_ref, 0.0), float(n))
        j = min(max(int(np.floor(s)) - 1, 0), n - 3)
        nodes = np.arange(j, j + 4, dtype=float)
        w = np.ones(4)
        for a in range(4):
            for b in range(4):
                if a != b:
                    w[a] *= (s - nodes[b]) / (nodes[a] - nodes[b])
        return j, w

    def interpolate(self, name: str, t: float):
        arr = getattr(self, name)
        if arr is None:
            raise ValueError(f"{name} not computed; run chi_and_rate first")
        j, w = self._stencil(t)
        return np.tensordot(w, arr[j : j + 4], axes=1)

    def at(self, t: float) -> ReferenceSample:
        j, w = self._stencil(t)

        def ip(arr):
            return None if arr is None else np.tensordot(w, arr[j : j + 4], axes=1)

        return ReferenceSample(
            float(t), ip(self.Q), ip(self.V), ip(self.V_dot), float(ip(self.E)), ip(self.chi), ip(self.dQ_dt)
        )

    # -- persistence -----------------------------------------------------

    def save(self, directory, stride: int = 100) -> list[Path]:
        """Write times.csv (t, E, theta) plus Q, V, chi snapshots every ``stride``
        samples in the Field binary format, and a trajectory.npz with all arrays."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        out = [directory / "times.csv"]
        theta = self.theta if self.theta is not None else np.full(len(self), np.nan)
        with out[0].open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "E", "theta"])
            for row in zip(self.times, self.E, theta):
                w.writerow([repr(float(v)) for v in row])
        snap = directory / "snapshots"
        snap.mkdir(exist_ok=True)
        idx = list(range(0, len(self), max(1, int(stride))))
        if idx[-1] != len(self) - 1:
            idx.append(len(self) - 1)
        for n in idx:
            for name in ("Q", "V", "chi"):
                arr = getattr(self, name)
                if arr is not None:
                    out.append(Field(self.grid, arr[n]).save(snap / f"{name}_{n:06d}.bin"))
        arrays = {
            k: getattr(self, k)
            for k in ("times", "Q", "V", "V_dot", "E", "residual", "A", "B", "chi", "dQ_dt", "theta")
            if getattr(self, k) is not None
        }
        npz = directory / "trajectory.npz"
        np.savez(npz, L=self.grid.L, N=self.grid.N, dt_ref=self.dt_ref, mass=self.mass, **arrays)
        out.append(npz)
        return out

    @classmethod
    def load(cls, directory) -> "ReferenceTrajectory":
        with np.load(Path(directory) / "trajectory.npz") as z:
            d = {k: z[k] for k in z.files}
        grid = Grid(float(d.pop("L")), int(d.pop("N")))
        return cls(
            grid,
            float(d.pop("dt_ref")),
            d.pop("times"),
            d.pop("Q"),
            d.pop("V"),
            d.pop("V_dot"),
            d.pop("E"),
            d.pop("residual"),
            float(d.pop("mass")),
            d.pop("A"),
            d.pop("B"),
            d.get("chi"),
            d.get("dQ_dt"),
            d.get("theta"),
        )


@dataclass
class TStarReport:
    horizon_reached: bool
    first_violation_time: float | None = None
    violation_kind: str | None = None
    rho_min: float = float("nan")
    counts: np.ndarray | None = field(default=None, repr=False)


def check_assumption(grid: Grid, V, rho_tol: float = DEFAULT_RHO_TOL) -> str | None:
    """Classify V: ``None`` when it has exactly one negative eigenvalue and no
    zero-energy resonance, else the violation kind."""
    rep = spectral_report(grid, V, rho_tol=rho_tol)
    if rep.negative_count >= 2:
        return "SecondBoundState"
    if rep.negative_count == 0:
        return "EigenvalueLoss"
    if rep.is_resonant:
        return "Resonance"
    return None


def _default_eigensolver(grid, mass, tol, gap_tol):
    def solve(V, guess):
        gs = ground_state(grid, V, mass, tol, guess=guess, gap_tol=gap_tol)
        return gs.energy, gs.psi, gs.residual

    return solve


def march_reference(
    grid: Grid,
    phi0,
    phi_dot0,
    mass: float = 1.0,
    dt_ref: float = 1e-3,
    T: float = 1.0,
    *,
    ref_tol: float = 1e-10,
    rho_tol: float = DEFAULT_RHO_TOL,
    gap_tol: float = DEFAULT_GAP_TOL,
    eigensolver: Eigensolver | None = None,
    check: bool = True,
) -> ReferenceTrajectory:
    """March (Q, V, E) from t = 0 to T with step dt_ref.

    Each step predicts Q_{n+1} = Q_n, accumulates A, B and forms V_{n+1},
    solves the ground state of V_{n+1} warm-started from Q_n, then corrects the
    accumulators with the new Q_{n+1}.  The prediction drops out of V_{n+1}
    exactly (see the module docstring), so one correction is final.  The norm
    ``mass`` is enforced after every eigensolve and the sign is chosen so that
    <Q_n, Q_{n+1}> > 0.

    ``eigensolver(V, Q_prev) -> (E, Q, residual)`` replaces the built-in ground
    state solver, e.g. for oracle tests.
    """
    phi0 = np.asarray(grid.check(phi0), dtype=float)
    phi_dot0 = np.asarray(grid.check(phi_dot0), dtype=float)
    if not (dt_ref > 0 and T >= 0 and mass > 0):
        raise ValueError("need dt_ref > 0, T >= 0 and mass > 0")
    n_steps = int(round(T / dt_ref))
    if abs(n_steps * dt_ref - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T = {T:g} is not a multiple of dt_ref = {dt_ref:g}")
    if check:
        kind = check_assumption(grid, phi0, rho_tol)
        if kind is not None:
            raise AssumptionViolated(f"initial potential fails the single-bound-state assumption: {kind}")
    solve = eigensolver or _default_eigensolver(grid, mass, ref_tol, gap_tol)

    times = dt_ref * np.arange(n_steps + 1)
    Qs = np.empty((n_steps + 1, grid.N))
    Vs = np.empty_like(Qs)
    Vd = np.empty_like(Qs)
    Es = np.empty(n_steps + 1)
    res = np.empty(n_steps + 1)

    def finish(n, E, Q, r):
        Q = np.asarray(Q, dtype=float)
        Q = Q * (mass / grid.l2(Q))
        if n > 0 and grid.inner(Qs[n - 1], Q).real < 0:
            Q = -Q
        Qs[n], Es[n], res[n] = Q, E, r

    guess = None
    try:
        E, Q, r = solve(phi0, guess)
    except NoNegativeEigenvalue as exc:
        raise AssumptionViolated(str(exc)) from exc
    finish(0, E, Q, r)
    Vs[0] = phi0
    Vd[0] = phi_dot0
    A = np.zeros(grid.N)
    B = np.zeros(grid.N)

    for n in range(n_steps):
        t0, t1 = times[n], times[n + 1]
        q0 = Qs[n] ** 2
        c1, s1 = np.cos(t1), np.sin(t1)
        # predictor: Q_{n+1} = Q_n
        A1 = A + 0.5 * dt_ref * (q0 * np.cos(t0) + q0 * c1)
        B1 = B + 0.5 * dt_ref * (q0 * np.sin(t0) + q0 * s1)
        V1 = phi0 * c1 + phi_dot0 * s1 - 0.5 * (s1 * A1 - c1 * B1)
        try:
            E, Q, r = solve(V1, Qs[n])
        except NoNegativeEigenvalue as exc:
            raise AssumptionViolated(f"ground state lost at t={t1:.6g}: {exc}") from exc
        except NoConvergence as exc:
            raise NoConvergence(str(exc), time=t1) from exc
        finish(n + 1, E, Q, r)
        # corrector: replace the predicted endpoint sample
        dq = Qs[n + 1] ** 2 - q0
        A = A1 + 0.5 * dt_ref * dq * c1
        B = B1 + 0.5 * dt_ref * dq * s1
        Vs[n + 1] = V1
        Vd[n + 1] = -phi0 * s1 + phi_dot0 * c1 - 0.5 * (c1 * A + s1 * B)

    return ReferenceTrajectory(grid, dt_ref, times, Qs, Vs, Vd, Es, res, float(mass), A, B)


def _time_derivative(arr: np.ndarray, dt: float) -> np.ndarray:
    """Centered differences, second-order one-sided at the ends."""
    n = len(arr)
    out = np.empty_like(arr)
    if n < 3:
        raise ValueError("need at least 3 samples for a second-order derivative")
    out[1:-1] = (arr[2:] - arr[:-2]) / (2 * dt)
    out[0] = (-3 * arr[0] + 4 * arr[1] - arr[2]) / (2 * dt)
    out[-1] = (3 * arr[-1] - 4 * arr[-2] + arr[-3]) / (2 * dt)
    return out


def chi_and_rate(traj: ReferenceTrajectory, tol: float = 1e-10, maxiter: int = 2000) -> ReferenceTrajectory:
    """Fill dQ_dt, chi = (H - E)^{-1} dQ_dt on Q's complement, and theta = int E.

    Also stores sup_t ||<x> chi||_1 and sup_t ||chi||_inf in ``chi_diagnostics``.
    """
    g = traj.grid
    traj.dQ_dt = _time_derivative(traj.Q, traj.dt_ref)
    chi = np.empty_like(traj.Q)
    for n in range(len(traj)):
        try:
            chi[n] = constrained_resolvent_solve(g, traj.V[n], traj.E[n], traj.Q[n], traj.dQ_dt[n], tol, maxiter)
        except NoConvergence as exc:
            raise NoConvergence(str(exc), time=float(traj.times[n])) from exc
    traj.chi = chi
    theta = np.zeros(len(traj))
    theta[1:] = np.cumsum(0.5 * traj.dt_ref * (traj.E[1:] + traj.E[:-1]))
    traj.theta = theta
    traj.chi_diagnostics = {
        "sup_weighted_l1": float(max(g.h * np.sum(np.abs(c) * g.bracket) for c in chi)),
        "sup_linf": float(np.max(np.abs(chi))),
        "sup_l2": float(max(g.l2(c) for c in chi)),
    }
    return traj


def monitor_tstar(traj: ReferenceTrajectory, rho_tol: float = DEFAULT_RHO_TOL, stride: int = 1) -> TStarReport:
    """Run the zero-energy shooting diagnostic on V(t_n) and report the first
    time the single-bound-state assumption fails.

    Two or more bound states take precedence over a resonance.
    """
    idx = list(range(0, len(traj), max(1, int(stride))))
    if idx[-1] != len(traj) - 1:
        idx.append(len(traj) - 1)
    counts = np.empty(len(idx), dtype=int)
    rho_min = np.inf
    for i, n in enumerate(idx):
        rep = spectral_report(traj.grid, traj.V[n], rho_tol=rho_tol)
        counts[i] = rep.negative_count
        rho_min = min(rho_min, rep.rho)
        kind = None
        if rep.negative_count >= 2:
            kind = "SecondBoundState"
        elif rep.negative_count == 0:
            kind = "EigenvalueLoss"
        elif rep.is_resonant:
            kind = "Resonance"
        if kind is not None:
            return TStarReport(False, float(traj.times[n]), kind, float(rho_min), counts[: i + 1])
    return TStarReport(True, None, None, float(rho_min), counts)


def direct_convolution(traj: ReferenceTrajectory, n: int) -> np.ndarray:
    """int_0^{t_n} sin(t_n - s) Q_s^2 ds by the O(n) trapezoid sum."""
    t = traj.times[: n + 1]
    w = np.full(n + 1, traj.dt_ref)
    w[0] = w[-1] = 0.5 * traj.dt_ref
    if n == 0:
        return np.zeros(traj.grid.N)
    return (w * np.sin(traj.times[n] - t)) @ (traj.Q[: n + 1] ** 2)


def field_equation_residual(traj: ReferenceTrajectory) -> float:
    """max_n ||(V_{n+1} - 2V_n + V_{n-1})/dt^2 + V_n + Q_n^2/2||_2 over interior n."""
    g = traj.grid
    dt = traj.dt_ref
    V, Q = traj.V, traj.Q
    worst = 0.0
    for n in range(1, len(traj) - 1):
        r = (V[n + 1] - 2 * V[n] + V[n - 1]) / dt**2 + V[n] + 0.5 * Q[n] ** 2
        worst = max(worst, g.l2(r))
    return worst
