"""Linear adiabatic evolution  i eps d_t Psi = H(t) Psi  with H(t) = -d^2/dx^2 + V(t).

Along a path of potentials with an isolated ground state (E(t), Phi(t)),
||Phi|| = 1, define

    theta = int_0^t E,     beta = int_0^t Im<Phi, Phi'>,
    Xi = e^{-i beta} (H - E)^{-1} (Phi' - i Im<Phi, Phi'> Phi).

Starting from Psi(0) = Phi(0),

    ||Psi - e^{-i theta/eps - i beta} Phi||  and  ||Pi Psi||  are bounded by
    2 eps sup_{s<=t} (||Xi(s)|| + int_0^s ||Xi'||),

with Pi = 1 - |Phi><Phi|, and the energy <Pi Psi, (H - E) Pi Psi> is O(eps^2).

With ``deflate=True`` the generator is H - E |Phi><Phi|, which equals H P for
the projection P onto Phi's complement.  The rank-one part is exponentiated
exactly: exp(i dt E/eps |Phi><Phi|) = 1 + (e^{i dt E/eps} - 1) |Phi><Phi|.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import HorizonMismatch, NonFiniteSample
from .grid import Grid
from .spectral import DEFAULT_GAP_TOL, constrained_resolvent_solve, ground_state

__all__ = [
    "AdiabaticPath",
    "AdiabaticRun",
    "AdiabaticErrorReport",
    "PathStepper",
    "evolve_adiabatic",
    "adiabatic_bound_check",
    "time_derivative",
]

MAX_STEP_RATIO = 0.05


def time_derivative(arr: np.ndarray, dt: float) -> np.ndarray:
    """Centered differences along axis 0, second-order one-sided at the ends."""
    arr = np.asarray(arr)
    if len(arr) < 3:
        raise ValueError("need at least 3 samples for a second-order derivative")
    out = np.empty_like(arr)
    out[1:-1] = (arr[2:] - arr[:-2]) / (2 * dt)
    out[0] = (-3 * arr[0] + 4 * arr[1] - arr[2]) / (2 * dt)
    out[-1] = (3 * arr[-1] - 4 * arr[-2] + arr[-3]) / (2 * dt)
    return out


def _lagrange(times: np.ndarray, dt: float, t: float):
    n = len(times) - 1
    if t < -1e-12 or t > times[-1] + 1e-9 * max(1.0, times[-1]):
        raise HorizonMismatch(f"t = {t:g} outside the path horizon [0, {times[-1]:g}]")
    s = min(max(t / dt, 0.0), float(n))
    j = min(max(int(np.floor(s)) - 1, 0), n - 3)
    nodes = np.arange(j, j + 4, dtype=float)
    w = np.ones(4)
    for a in range(4):
        for b in range(4):
            if a != b:
                w[a] *= (s - nodes[b]) / (nodes[a] - nodes[b])
    return j, w


class AdiabaticPath:
    """Ground-state data of -d^2/dx^2 + V(t) on the mesh t_j = j dt_path.

    Parameters
    ----------
    grid : Grid
    V : callable
        ``V(t)`` returns the potential samples at time t.
    T : float
        Horizon.
    dt_path : float
        Mesh spacing for the eigen-data; values between nodes are cubic
        interpolants (eigenvectors renormalized).
    deflate : bool
        Use H - E |Phi><Phi| as the generator.
    static : bool
        The potential does not depend on t; one eigensolve serves all times.
    """

    def __init__(
        self,
        grid: Grid,
        V: Callable[[float], np.ndarray],
        T: float = 1.0,
        dt_path: float = 1e-3,
        *,
        deflate: bool = False,
        static: bool = False,
        tol: float = 1e-10,
        gap_tol: float = DEFAULT_GAP_TOL,
    ):
        self.grid = grid
        self.V = V
        self.T = float(T)
        self.deflate = bool(deflate)
        self.static = bool(static)
        self.tol = tol
        n = max(3, int(round(T / dt_path)))
        self.dt_path = self.T / n if T > 0 else dt_path
        self.times = self.dt_path * np.arange(n + 1)
        if static:
            gs = ground_state(grid, V(0.0), 1.0, tol, gap_tol=gap_tol)
            self.E = np.full(n + 1, gs.energy)
            self.Phi = np.broadcast_to(gs.psi, (n + 1, grid.N))
            self.dPhi = np.zeros((n + 1, grid.N))
        else:
            E = np.empty(n + 1)
            Phi = np.empty((n + 1, grid.N))
            guess = None
            for j, t in enumerate(self.times):
                gs = ground_state(grid, V(t), 1.0, tol, guess=guess, gap_tol=gap_tol)
                psi = gs.psi
                if j and grid.inner(Phi[j - 1], psi).real < 0:
                    psi = -psi
                E[j], Phi[j] = gs.energy, psi
                guess = psi
            self.E, self.Phi = E, Phi
            self.dPhi = time_derivative(Phi, self.dt_path)
        self.theta = np.concatenate([[0.0], np.cumsum(0.5 * self.dt_path * (self.E[1:] + self.E[:-1]))])
        # real eigenvectors: Im<Phi, Phi'> = 0, hence beta = 0
        self.beta = np.zeros(n + 1)
        self._xi = None

    # -- interpolation ---------------------------------------------------

    def eig_at(self, t: float):
        """(E, Phi, dPhi) at time t; Phi renormalized to unit norm."""
        if self.static:
            self._check(t)
            return float(self.E[0]), self.Phi[0], self.dPhi[0]
        j, w = _lagrange(self.times, self.dt_path, t)
        E = float(w @ self.E[j : j + 4])
        Phi = w @ self.Phi[j : j + 4]
        dPhi = w @ self.dPhi[j : j + 4]
        return E, Phi / self.grid.l2(Phi), dPhi

    def _check(self, t):
        if t < -1e-12 or t > self.T + 1e-9 * max(1.0, self.T):
            raise HorizonMismatch(f"t = {t:g} outside the path horizon [0, {self.T:g}]")

    def interp_scalar(self, arr, t: float) -> float:
        if self.static:
            self._check(t)
            return float(arr[0]) if np.ndim(arr) else float(arr)
        j, w = _lagrange(self.times, self.dt_path, t)
        return float(w @ arr[j : j + 4])

    # -- corrector Xi ------------------------------------------------------

    def compute_xi(self, tol: float = 1e-10) -> "AdiabaticPath":
        g = self.grid
        n = len(self.times)
        if self.static:
            self.Xi = np.zeros((n, g.N))
        else:
            Xi = np.empty((n, g.N))
            for j, t in enumerate(self.times):
                # Im<Phi, Phi'> = 0 for real Phi, so the right side is Phi'
                Xi[j] = constrained_resolvent_solve(g, self.V(t), self.E[j], self.Phi[j], self.dPhi[j], tol)
            self.Xi = Xi
        self.xi_norm = np.array([g.l2(x) for x in self.Xi])
        if self.static:
            self.dxi_norm = np.zeros(n)
        else:
            dXi = time_derivative(self.Xi, self.dt_path)
            self.dxi_norm = np.array([g.l2(x) for x in dXi])
        int_dxi = np.concatenate([[0.0], np.cumsum(0.5 * self.dt_path * (self.dxi_norm[1:] + self.dxi_norm[:-1]))])
        self.bound_core = np.maximum.accumulate(self.xi_norm + int_dxi)
        self._xi = True
        return self

    def bound_core_at(self, t: float) -> float:
        """sup_{s<=t} (||Xi(s)|| + int_0^s ||Xi'||), linear between nodes."""
        if self._xi is None:
            self.compute_xi()
        return float(np.interp(t, self.times, self.bound_core))


class PathStepper:
    """One Strang step with all time-dependent data at the step midpoint:
    kinetic half, potential, kinetic half; with deflation the potential is
    split as half potential, rank-one factor, half potential."""

    def __init__(self, path: AdiabaticPath, epsilon: float, dt: float, absorb_mask=None):
        if not 0 < abs(dt) <= MAX_STEP_RATIO * epsilon * (1 + 1e-12):
            raise ValueError(f"|dt| must lie in (0, {MAX_STEP_RATIO} eps]")
        self.path = path
        self.eps = float(epsilon)
        self.dt = float(dt)
        self.kin = np.exp(-0.5j * path.grid.k2 * dt / epsilon)
        self.mask = absorb_mask
        self._static_phase = None
        if path.static:
            V0 = path.V(0.0)
            self._static_phase = np.exp(-1j * V0 * dt / epsilon)
            self._static_half = np.exp(-0.5j * V0 * dt / epsilon)

    def __call__(self, psi: np.ndarray, t: float) -> np.ndarray:
        p, dt, eps = self.path, self.dt, self.eps
        tm = t + 0.5 * dt
        psi = np.fft.ifft(self.kin * np.fft.fft(psi))
        if self._static_phase is not None:
            phase, half = self._static_phase, self._static_half
        else:
            Vm = p.V(tm)
            phase, half = np.exp(-1j * Vm * dt / eps), np.exp(-0.5j * Vm * dt / eps)
        if p.deflate:
            # V and the rank-one term do not commute: split V symmetrically
            E, Phi, _ = p.eig_at(tm)
            psi = half * psi
            psi = psi + (np.exp(1j * dt * E / eps) - 1.0) * p.grid.inner(Phi, psi) * Phi
            psi = half * psi
        else:
            psi = phase * psi
        psi = np.fft.ifft(self.kin * np.fft.fft(psi))
        if self.mask is not None:
            psi = psi * self.mask
        if not np.isfinite(psi).all():
            raise NonFiniteSample("non-finite sample in adiabatic step", time=t + dt)
        return psi


@dataclass
class AdiabaticRun:
    epsilon: float
    dt: float
    times: np.ndarray
    states: list = field(default_factory=list)
    norms: np.ndarray | None = None


def _n_steps(T, dt):
    n = int(round(T / dt))
    if n < 1:
        raise ValueError("horizon shorter than one step")
    return n, T / n


def evolve_adiabatic(
    path: AdiabaticPath,
    epsilon: float,
    dt: float,
    T: float | None = None,
    *,
    psi0=None,
    store_every: int = 1,
    observer=None,
) -> AdiabaticRun:
    """Evolve from Psi(0) = Phi(0) (or ``psi0``) to T (default: the path horizon).

    dt is adjusted down so that T/dt is an integer.  ``observer(t, psi)`` sees
    every state including the initial one.
    """
    T = path.T if T is None else T
    n, dt = _n_steps(T, dt)
    step = PathStepper(path, epsilon, dt)
    psi = (path.Phi[0] if psi0 is None else np.asarray(psi0)).astype(complex)
    times = dt * np.arange(n + 1)
    run = AdiabaticRun(epsilon, dt, times)
    norms = np.empty(n + 1)
    for i in range(n + 1):
        if i:
            psi = step(psi, times[i - 1])
        norms[i] = path.grid.l2(psi)
        if store_every and i % store_every == 0:
            run.states.append(psi.copy())
        if observer is not None:
            observer(times[i], psi)
    run.norms = norms
    return run


@dataclass
class AdiabaticErrorReport:
    """Per-step series.  ``ratio`` = lhs_l2 / rhs_l2 and ``proj_ratio`` uses
    ||Pi Psi|| in place of lhs_l2."""

    epsilon: float
    t: np.ndarray
    lhs_l2: np.ndarray
    rhs_l2: np.ndarray
    proj_l2: np.ndarray
    energy_lhs: np.ndarray
    norm: np.ndarray

    @property
    def ratio(self) -> np.ndarray:
        return np.divide(self.lhs_l2, self.rhs_l2, out=np.zeros_like(self.lhs_l2), where=self.rhs_l2 > 0)

    @property
    def proj_ratio(self) -> np.ndarray:
        return np.divide(self.proj_l2, self.rhs_l2, out=np.zeros_like(self.proj_l2), where=self.rhs_l2 > 0)

    def holds(self, tol_num: float = 0.1) -> bool:
        """Both bounds pointwise in t, up to the factor 1 + tol_num."""
        lim = (1 + tol_num) * self.rhs_l2 + 1e-14
        return bool(np.all(self.lhs_l2 <= lim) and np.all(self.proj_l2 <= lim))

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "lhs_l2", "rhs_l2", "energy_lhs", "ratio"])
            for row in zip(self.t, self.lhs_l2, self.rhs_l2, self.energy_lhs, self.ratio):
                w.writerow([repr(float(v)) for v in row])
        return path


def adiabatic_bound_check(path: AdiabaticPath, epsilon: float, dt: float, T: float | None = None) -> AdiabaticErrorReport:
    """Evolve and compare with the adiabatic approximation at every step.

    theta is accumulated at the evolution's resolution from interpolated E so
    that the fast phase theta/eps stays accurate.
    """
    if path.deflate:
        raise ValueError("the bound check uses the undeflated generator")
    g = path.grid
    path.bound_core_at(0.0)
    rows = []
    acc = {"theta": 0.0, "last": None}

    def observe(t, psi):
        E, Phi, _ = path.eig_at(t)
        if acc["last"] is not None:
            t0, E0 = acc["last"]
            acc["theta"] += 0.5 * (t - t0) * (E0 + E)
        acc["last"] = (t, E)
        beta = path.interp_scalar(path.beta, t)
        approx = np.exp(-1j * acc["theta"] / epsilon - 1j * beta) * Phi
        lhs = g.l2(psi - approx)
        proj = psi - g.inner(Phi, psi) * Phi
        energy = g.dirichlet_energy(proj) + g.h * float(np.sum(path.V(t) * np.abs(proj) ** 2)) - E * g.l2(proj) ** 2
        rhs = 2 * epsilon * path.bound_core_at(t)
        rows.append((t, lhs, rhs, g.l2(proj), energy, g.l2(psi)))

    evolve_adiabatic(path, epsilon, dt, T, store_every=0, observer=observe)
    cols = [np.array(c) for c in zip(*rows)]
    return AdiabaticErrorReport(epsilon, *cols)
