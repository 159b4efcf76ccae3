"""Validated initial data."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import PolaronState
from .grid import Grid
from .spectral import GroundState, ground_state

__all__ = ["InitialData", "poschl_teller", "translated_well", "bump", "PRESETS", "make_preset"]


@dataclass
class InitialData:
    """Field data (phi_0, phi_dot_0), the ground state psi_0 of -d^2/dx^2 + phi_0
    with ||psi_0||_2 = mass, and its energy E_0."""

    grid: Grid
    phi0: np.ndarray
    phi_dot0: np.ndarray
    mass: float
    ground: GroundState

    @property
    def psi0(self) -> np.ndarray:
        return self.ground.psi

    @property
    def E0(self) -> float:
        return self.ground.energy

    def state(self) -> PolaronState:
        return PolaronState(self.grid, 0.0, self.psi0.astype(complex), self.phi0.copy(), self.phi_dot0.copy())


def sech2_well(grid: Grid, depth: float, shift: float = 0.0) -> np.ndarray:
    return -depth / np.cosh(grid.x - shift) ** 2


def poschl_teller(grid: Grid, a: float = 1.5, kick: float = 0.2, mass: float = 1.0, tol: float = 1e-10) -> InitialData:
    """phi_0 = -a sech^2 x, phi_dot_0 = kick * x * exp(-x^2).

    For a = 1.5 the well has one bound state and no zero-energy resonance.
    """
    phi0 = sech2_well(grid, a)
    phi_dot0 = kick * grid.x * np.exp(-grid.x**2)
    return InitialData(grid, phi0, phi_dot0, float(mass), ground_state(grid, phi0, mass, tol))


def translated_well(grid: Grid, depth: float = 1.5, amplitude: float = 0.3):
    """Potential path t -> -depth sech^2(x - amplitude sin t)."""

    def V(t: float) -> np.ndarray:
        return sech2_well(grid, depth, amplitude * np.sin(t))

    return V


def bump(grid: Grid) -> np.ndarray:
    """Unit-mass (1 + x^2)^{-2} profile."""
    f = (1.0 + grid.x**2) ** -2
    return f / grid.l2(f)


PRESETS = {"poschl_teller": poschl_teller}


def make_preset(name: str, grid: Grid, **params) -> InitialData:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None
    return factory(grid, **params)
