"""Projected linear dynamics and dispersive decay.

For a path V(t) whose Schroedinger operator has a single negative eigenvalue
E(t) with normalized nonnegative eigenfunction phi(t), P_c = 1 - |phi><phi|
and the equation

    i eps d_t psi = (-d^2/dx^2 + V) P_c psi

is evolved through the identity H P_c = H - E |phi><phi|, which makes the
generator self-adjoint.  The recorded quantity is psi~ = P_c(t) psi(t).
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .adiabatic import AdiabaticPath, PathStepper
from .dynamics import absorbing_mask
from .errors import AssumptionViolated, InsufficientSamples
from .grid import L2, LINF, Grid, NormKind
from .reference import check_assumption
from .spectral import ground_state

__all__ = [
    "pc_project",
    "ProjectedRun",
    "DecayFit",
    "evolve_projected",
    "evolve_free",
    "measure_decay",
    "fit_power_law",
    "reflection_time",
    "bandwidth",
    "decay_window",
    "duhamel_residual",
    "WINF_M1",
]

WINF_M1 = NormKind("Linf", -1)


def pc_project(grid: Grid, V, f, phi=None) -> np.ndarray:
    """f - <phi, f> phi with phi the normalized ground state of -d^2/dx^2 + V."""
    if phi is None:
        phi = ground_state(grid, V, 1.0).psi
    return f - grid.inner(phi, f) * phi


@dataclass
class ProjectedRun:
    """Series per step: ``winf_m1`` = ||<x>^{-1} psi~||_inf, ``linf``, ``l2``,
    ``mass`` = ||psi||_2 and ``leak`` = |<phi, psi>| of the unprojected state.
    ``states`` holds psi~ every ``store_every`` steps at ``state_times``."""

    grid: Grid
    epsilon: float
    dt: float
    t: np.ndarray
    winf_m1: np.ndarray
    linf: np.ndarray
    l2: np.ndarray
    mass: np.ndarray
    leak: np.ndarray
    path: AdiabaticPath | None
    psi0: np.ndarray
    store_every: int = 1
    states: list = field(default_factory=list, repr=False)
    state_times: list = field(default_factory=list, repr=False)

    def series(self, kind: NormKind) -> np.ndarray:
        if kind == WINF_M1:
            return self.winf_m1
        if kind == LINF:
            return self.linf
        if kind == L2:
            return self.l2
        raise ValueError(f"no stored series for {kind}")

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "winf_m1", "linf", "l2"])
            for row in zip(self.t, self.winf_m1, self.linf, self.l2):
                w.writerow([repr(float(v)) for v in row])
        return path


def _check_path(path: AdiabaticPath, rho_tol: float, stride: int):
    idx = list(range(0, len(path.times), max(1, stride)))
    if idx[-1] != len(path.times) - 1:
        idx.append(len(path.times) - 1)
    if path.static:
        idx = [0]
    for j in idx:
        t = float(path.times[j])
        kind = check_assumption(path.grid, path.V(t), rho_tol)
        if kind is not None:
            raise AssumptionViolated(f"potential at t={t:.6g} violates the dispersive assumption: {kind}")


def _run(grid, eps, dt, T, psi, step_fn, project, path, store_every, psi0):
    n = int(round(T / dt))
    if n < 1:
        raise ValueError("horizon shorter than one step")
    dt = T / n
    t = dt * np.arange(n + 1)
    cols = np.empty((5, n + 1))
    run = ProjectedRun(grid, eps, dt, t, *cols, path=path, psi0=psi0, store_every=store_every)
    for i in range(n + 1):
        if i:
            psi = step_fn(psi, t[i - 1])
        if project:
            _, phi, _ = path.eig_at(t[i])
            ov = grid.inner(phi, psi)
            pt = psi - ov * phi
        else:
            ov, pt = 0.0, psi
        run.winf_m1[i] = grid.norm(pt, WINF_M1)
        run.linf[i] = float(np.max(np.abs(pt)))
        run.l2[i] = grid.l2(pt)
        run.mass[i] = grid.l2(psi)
        run.leak[i] = abs(ov)
        if store_every and i % store_every == 0:
            run.states.append(pt.copy())
            run.state_times.append(float(t[i]))
    return run


def evolve_projected(
    path: AdiabaticPath,
    psi0,
    epsilon: float,
    dt: float,
    T: float | None = None,
    *,
    store_every: int = 1,
    absorb: bool = False,
    absorb_strength: float = 5.0,
    rho_tol: float = 0.02,
    check_stride: int = 10,
) -> ProjectedRun:
    """Evolve the projected equation from P_c(0) psi0.

    ``path`` must be built with ``deflate=True``.  The single-bound-state,
    non-resonant assumption is checked on every ``check_stride``-th path node.
    """
    if not path.deflate:
        raise ValueError("evolve_projected needs a deflated path")
    _check_path(path, rho_tol, check_stride)
    g = path.grid
    T = path.T if T is None else T
    n = int(round(T / dt))
    dt = T / max(n, 1)
    mask = absorbing_mask(g, dt, epsilon, absorb_strength) if absorb else None
    step = PathStepper(path, epsilon, dt, mask)
    _, phi0, _ = path.eig_at(0.0)
    psi = np.asarray(psi0, dtype=complex)
    psi = psi - g.inner(phi0, psi) * phi0
    return _run(g, epsilon, dt, T, psi, step, True, path, store_every, psi.copy())


def evolve_free(grid: Grid, psi0, epsilon: float, dt: float, T: float, store_every: int = 0) -> ProjectedRun:
    """Baseline without potential or projection: exact free evolution per step."""
    if not 0 < dt <= 0.05 * epsilon * (1 + 1e-12):
        raise ValueError("dt must lie in (0, 0.05 eps]")
    n = int(round(T / dt))
    dt = T / max(n, 1)
    prop = np.exp(-1j * grid.k2 * dt / epsilon)

    def step(psi, _t):
        return np.fft.ifft(prop * np.fft.fft(psi))

    psi = np.asarray(psi0, dtype=complex)
    return _run(grid, epsilon, dt, T, psi, step, False, None, store_every, psi.copy())


@dataclass
class DecayFit:
    window: tuple
    p: float
    c: float
    r2: float
    n: int

    def to_json(self, path=None) -> str:
        s = json.dumps(asdict(self), indent=2)
        if path is not None:
            Path(path).write_text(s)
        return s


def fit_power_law(t, y) -> DecayFit:
    """Least squares of log y = log c + p log t."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < 10:
        raise InsufficientSamples(f"decay fit needs at least 10 samples, got {len(t)}")
    if np.any(t <= 0) or np.any(y <= 0):
        raise InsufficientSamples("decay fit needs positive times and values")
    X, Y = np.log(t), np.log(y)
    p, logc = np.polyfit(X, Y, 1)
    resid = Y - (p * X + logc)
    ss = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return DecayFit((float(t[0]), float(t[-1])), float(p), float(np.exp(logc)), r2, len(t))


def measure_decay(run: ProjectedRun, kind: NormKind = WINF_M1, window=None) -> DecayFit:
    """Power-law fit of a stored norm series on ``window`` (default: decay_window)."""
    lo, hi = window if window is not None else decay_window(run)
    if lo < 5 * run.epsilon * (1 - 1e-9):
        raise ValueError(f"window must start at t >= 5 eps = {5 * run.epsilon:g}")
    if hi <= lo:
        raise InsufficientSamples(
            f"empty decay window [{lo:g}, {hi:g}]: the reflection time precedes 5 eps; enlarge the box"
        )
    sel = (run.t >= lo - 1e-12) & (run.t <= hi + 1e-12)
    return fit_power_law(run.t[sel], run.series(kind)[sel])


# Fraction of ||f||^2 below k_max.  The weighted sup norm falls to ~1e-3, so
# the faster tail must carry much less than that or its wrap-around dominates.
BANDWIDTH_FRACTION = 1.0 - 1e-8


def bandwidth(grid: Grid, f, fraction: float = BANDWIDTH_FRACTION) -> float:
    """Smallest k with the modes |k_m| <= k carrying ``fraction`` of ||f||^2."""
    P = np.abs(np.fft.fft(f)) ** 2
    order = np.argsort(np.abs(grid.k))
    cum = np.cumsum(P[order]) / np.sum(P)
    return float(np.abs(grid.k)[order][np.searchsorted(cum, fraction)])


def reflection_time(grid: Grid, f, epsilon: float, fraction: float = BANDWIDTH_FRACTION) -> float:
    """eps L / k_max with k_max the bandwidth of f."""
    return epsilon * grid.L / max(bandwidth(grid, f, fraction), 1e-12)


def decay_window(run: ProjectedRun, T_max: float = 1.0) -> tuple:
    """[5 eps, min(T_max, t_refl, end of run)]."""
    hi = min(T_max, reflection_time(run.grid, run.psi0, run.epsilon), float(run.t[-1]))
    return (5 * run.epsilon, hi)


def duhamel_residual(run: ProjectedRun, t0: float, t: float) -> float:
    """L_inf norm of psi~(t) minus the right side of the Duhamel identity
    with the static reference operator H0 = -d^2/dx^2 + V(t0).

    The propagator e^{-i H0 tau/eps} is applied by Strang steps of the run's dt,
    followed by P_c(t0), which commutes with it.  The time integrals are
    trapezoid sums over the stored states, accumulated recursively so that each
    step costs one propagation.  d phi/ds comes from the path's centered
    differences.
    """
    g, eps = run.grid, run.epsilon
    if run.store_every != 1:
        raise InsufficientSamples("the Duhamel residual needs psi~ at every step (store_every=1)")
    k = int(round(t / run.dt))
    if k > len(run.states) - 1:
        raise InsufficientSamples(f"t = {t:g} beyond the stored states")
    path = run.path
    V0 = path.V(t0)
    phi0 = ground_state(g, V0, 1.0, path.tol).psi

    def Pc0(f):
        return f - g.inner(phi0, f) * phi0

    kin = np.exp(-0.5j * g.k2 * run.dt / eps)
    pot = np.exp(-1j * V0 * run.dt / eps)

    def U(f):
        f = np.fft.ifft(kin * np.fft.fft(f))
        f = pot * f
        return np.fft.ifft(kin * np.fft.fft(f))

    h = run.dt
    free = Pc0(run.psi0.astype(complex))
    acc = np.zeros(g.N, dtype=complex)
    b = 0.0
    a_prev = None
    for j in range(k + 1):
        s = j * h
        psit = run.states[j]
        _, phi, dphi = path.eig_at(s)
        a = g.inner(dphi, psit)
        if j:
            b += 0.5 * h * (a_prev + a)
        a_prev = a
        integrand = Pc0((path.V(s) - V0) * psit / (1j * eps) - a * phi - b * dphi)
        w = 0.0 if k == 0 else (0.5 * h if j in (0, k) else h)
        if j:
            acc = U(acc)
            free = U(free)
        acc = acc + w * integrand
    rhs = Pc0(free) + g.inner(phi0, run.states[k]) * phi0 + Pc0(acc)
    return float(np.max(np.abs(rhs - run.states[k])))
