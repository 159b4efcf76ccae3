"""Time integration of the one-dimensional Landau-Pekar system

    eps i d_t psi = -psi'' + phi psi,      -d_t^2 phi = phi + |psi|^2 / 2.

One step is a Strang splitting: exact free kinetic half steps for psi around an
inner block in which |psi|^2 is constant, so the field obeys a forced harmonic
oscillator that is advanced exactly, and psi picks up the phase of the
midpoint field.  Mass is conserved to round-off.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import NonFiniteSample
from .grid import Field, Grid

__all__ = [
    "PolaronState",
    "LPParams",
    "ConservedDiagnostics",
    "LPRun",
    "field_advance",
    "absorbing_mask",
    "lp_step",
    "evolve_lp",
    "conserved",
]

MAX_STEP_RATIO = 0.05


@dataclass
class PolaronState:
    grid: Grid
    t: float
    psi: np.ndarray
    phi: np.ndarray
    phi_dot: np.ndarray

    def __post_init__(self):
        self.psi = np.asarray(self.grid.check(self.psi), dtype=complex)
        self.phi = np.asarray(self.grid.check(self.phi), dtype=float)
        self.phi_dot = np.asarray(self.grid.check(self.phi_dot), dtype=float)

    def copy(self) -> "PolaronState":
        return PolaronState(self.grid, self.t, self.psi.copy(), self.phi.copy(), self.phi_dot.copy())


@dataclass
class LPParams:
    epsilon: float
    dt: float
    checkpoints: tuple = ()
    absorb: bool = False
    absorb_strength: float = 5.0
    couple: bool = True

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if not self.dt or abs(self.dt) > MAX_STEP_RATIO * self.epsilon * (1 + 1e-12):
            raise ValueError(
                f"|dt| = {abs(self.dt):g} must be nonzero and at most {MAX_STEP_RATIO} * epsilon"
            )

    @classmethod
    def from_ratio(cls, epsilon: float, c_psi: float = 0.02, **kw) -> "LPParams":
        return cls(epsilon, c_psi * epsilon, **kw)

    @property
    def c_psi(self) -> float:
        return abs(self.dt) / self.epsilon


@dataclass
class ConservedDiagnostics:
    mass: float
    energy: float


def conserved(state: PolaronState) -> ConservedDiagnostics:
    """Mass ||psi||^2 and energy ||psi'||^2 + int phi|psi|^2 + int (phi^2 + phi_dot^2)."""
    g = state.grid
    rho = np.abs(state.psi) ** 2
    mass = g.h * float(np.sum(rho))
    energy = (
        g.dirichlet_energy(state.psi)
        + g.h * float(np.sum(state.phi * rho))
        + g.h * float(np.sum(state.phi**2 + state.phi_dot**2))
    )
    return ConservedDiagnostics(mass, energy)


def field_advance(phi, phi_dot, rho, tau):
    """Exact solution of phi'' = -phi - rho/2 over a time tau with rho frozen."""
    c, s = np.cos(tau), np.sin(tau)
    half = 0.5 * rho
    new_phi = phi * c + phi_dot * s - half * (1.0 - c)
    new_dot = -phi * s + phi_dot * c - half * s
    return new_phi, new_dot


def absorbing_mask(grid: Grid, dt: float, epsilon: float, strength: float = 5.0) -> np.ndarray:
    """Per-step damping factor exp(-strength |dt|/eps * ramp) with a sin^2 ramp
    on the outer 10% of the box.  Never used by the conservation checks."""
    width = 0.1 * grid.L
    depth = np.clip((np.abs(grid.x) - (grid.L - width)) / width, 0.0, 1.0)
    ramp = np.sin(0.5 * np.pi * depth) ** 2
    return np.exp(-strength * abs(dt) / epsilon * ramp)


class _Stepper:
    """Caches the phase factors of one (grid, params) pair."""

    def __init__(self, grid: Grid, params: LPParams):
        self.grid = grid
        self.params = params
        self.kin = np.exp(-0.5j * grid.k2 * params.dt / params.epsilon)
        self.mask = absorbing_mask(grid, params.dt, params.epsilon, params.absorb_strength) if params.absorb else None

    def __call__(self, state: PolaronState) -> PolaronState:
        p = self.params
        dt, eps = p.dt, p.epsilon
        psi = np.fft.ifft(self.kin * np.fft.fft(state.psi))
        phi, phi_dot = state.phi, state.phi_dot
        if p.couple:
            rho = np.abs(psi) ** 2
            phi, phi_dot = field_advance(phi, phi_dot, rho, 0.5 * dt)
            psi = np.exp(-1j * phi * dt / eps) * psi
            # |psi|^2 is unchanged by the phase step
            phi, phi_dot = field_advance(phi, phi_dot, rho, 0.5 * dt)
        psi = np.fft.ifft(self.kin * np.fft.fft(psi))
        if self.mask is not None:
            psi = psi * self.mask
        t = state.t + dt
        if not (np.isfinite(psi).all() and np.isfinite(phi).all() and np.isfinite(phi_dot).all()):
            raise NonFiniteSample("non-finite sample in LP step", time=t)
        return PolaronState(self.grid, t, psi, phi, phi_dot)


def lp_step(state: PolaronState, params: LPParams) -> PolaronState:
    """Advance one Strang step of size ``params.dt`` (negative dt runs backwards)."""
    return _Stepper(state.grid, params)(state)


@dataclass
class LPRun:
    """Output of :func:`evolve_lp`: per-step diagnostics plus stored states."""

    epsilon: float
    dt: float
    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    linf_psi: np.ndarray
    checkpoints: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    @property
    def final(self) -> PolaronState:
        return self.checkpoints[-1]

    def write_diagnostics(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mass", "energy", "linf_psi"])
            for row in zip(self.times, self.mass, self.energy, self.linf_psi):
                w.writerow([repr(float(v)) for v in row])
        return path

    def write_checkpoints(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        out = []
        for i, st in enumerate(self.checkpoints):
            for name, vals in (("psi", st.psi), ("phi", st.phi), ("phi_dot", st.phi_dot)):
                out.append(Field(st.grid, vals).save(directory / f"{name}_{i:04d}.bin"))
        return out


def evolve_lp(
    initial: PolaronState,
    params: LPParams,
    T: float,
    *,
    store_every: int = 0,
    observer: Callable[[PolaronState], None] | None = None,
    observe_every: int = 1,
) -> LPRun:
    """Integrate from ``initial.t`` to ``initial.t + T``.

    Diagnostics are recorded after every step.  States at the times in
    ``params.checkpoints`` (rounded to the step grid) and at the end are kept;
    ``store_every > 0`` additionally keeps every n-th state, and ``observer`` is
    called with every ``observe_every``-th state (including the initial one).
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    n = int(round(T / abs(params.dt)))
    if n and abs(n * abs(params.dt) - T) > 1e-9 * max(T, 1.0):
        params = replace(params, dt=np.sign(params.dt) * T / n)
    step = _Stepper(initial.grid, params)
    cp_steps = {int(round(c / abs(params.dt))) for c in params.checkpoints if 0 <= c <= T}
    cp_steps.add(n)

    times = np.empty(n + 1)
    mass = np.empty(n + 1)
    energy = np.empty(n + 1)
    linf = np.empty(n + 1)
    state = initial.copy()
    run = LPRun(params.epsilon, params.dt, times, mass, energy, linf)

    def record(i, st):
        d = conserved(st)
        times[i], mass[i], energy[i] = st.t, d.mass, d.energy
        linf[i] = float(np.max(np.abs(st.psi)))
        if i in cp_steps or (i == 0 and 0 in cp_steps):
            run.checkpoints.append(st.copy())
        if store_every and i % store_every == 0:
            run.snapshots.append(st.copy())
        if observer is not None and i % observe_every == 0:
            observer(st)

    record(0, state)
    for i in range(1, n + 1):
        state = step(state)
        record(i, state)
    return run
