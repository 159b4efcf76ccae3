"""The Schroedinger operator -d^2/dx^2 + W on a periodic grid.

Ground states come from a Lanczos run with full reorthogonalization followed by
Rayleigh-quotient shifted inverse iteration.  The inverse-iteration step is
solved in correction form: with x the current unit vector and sigma its
Rayleigh quotient, the update t solves

    (1 - |x><x|) (H - sigma) (1 - |x><x|) t = -(H - sigma) x,   t _|_ x,

which is the Rayleigh-quotient-iteration step restricted to x's complement and
is symmetric positive definite there once x is close to the ground state.  It
is solved by preconditioned conjugate gradients, the same routine that serves
:func:`constrained_resolvent_solve`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence, NoNegativeEigenvalue, PotentialNotLocalized
from .grid import Grid

__all__ = [
    "GroundState",
    "SpectralReport",
    "LanczosResult",
    "apply_hamiltonian",
    "lanczos",
    "ground_state",
    "ritz_negative_count",
    "spectral_report",
    "constrained_resolvent_solve",
]

log = logging.getLogger(__name__)

DEFAULT_GAP_TOL = 1e-6
DEFAULT_RHO_TOL = 0.02
DEFAULT_BOUNDARY_TOL = 1e-6


@dataclass
class GroundState:
    energy: float
    psi: np.ndarray
    residual: float
    iterations: int = 0


@dataclass
class SpectralReport:
    negative_count: int
    rho: float
    is_resonant: bool
    u: np.ndarray = field(repr=False)


@dataclass
class LanczosResult:
    ritz_values: np.ndarray
    ritz_residuals: np.ndarray
    vector: np.ndarray
    steps: int


def apply_hamiltonian(grid: Grid, W, f) -> np.ndarray:
    """Return (-d^2/dx^2 + W) f."""
    W = grid.check(W)
    f = grid.check(f)
    return -grid.laplacian(f) + W * f


def _kinetic_inverse(grid: Grid, mu: float):
    """f -> (-d^2/dx^2 + mu)^{-1} f by FFT; SPD for mu > 0."""
    symbol = 1.0 / (grid.k2 + mu)

    def apply(f):
        out = np.fft.ifft(symbol * np.fft.fft(f))
        return out.real if np.isrealobj(f) else out

    return apply


def lanczos(matvec, v0, max_steps=300, tol=1e-4, min_steps=8, n_track=1) -> LanczosResult:
    """Lanczos with full reorthogonalization for the low end of a symmetric operator.

    Stops once the ``n_track`` lowest Ritz pairs have residual estimates
    ``beta_j |s_j|`` below ``tol`` (relative to the start-vector norm), or when
    the step budget is spent.  Returns the Ritz vector of the lowest Ritz value.
    """
    v = np.asarray(v0, dtype=float if np.isrealobj(v0) else complex)
    n = v.size
    max_steps = min(max_steps, n)
    basis = np.empty((max_steps + 1, n), dtype=v.dtype)
    alpha = np.zeros(max_steps)
    beta = np.zeros(max_steps)
    basis[0] = v / np.linalg.norm(v)
    steps = 0
    theta = s = None
    for j in range(max_steps):
        w = matvec(basis[j])
        alpha[j] = np.real(np.vdot(basis[j], w))
        # two Gram-Schmidt passes against the whole basis
        for _ in range(2):
            w = w - basis[: j + 1].T @ (basis[: j + 1].conj() @ w)
        beta[j] = np.linalg.norm(w)
        steps = j + 1
        if steps >= min_steps or beta[j] < 1e-14:
            T = np.diag(alpha[:steps]) + np.diag(beta[: steps - 1], 1) + np.diag(beta[: steps - 1], -1)
            theta, s = np.linalg.eigh(T)
            res = beta[j] * np.abs(s[-1, :])
            if beta[j] < 1e-14 or np.all(res[: min(n_track, steps)] < tol):
                break
        basis[j + 1] = w / beta[j]
    if theta is None:
        T = np.diag(alpha[:steps]) + np.diag(beta[: steps - 1], 1) + np.diag(beta[: steps - 1], -1)
        theta, s = np.linalg.eigh(T)
    res = beta[steps - 1] * np.abs(s[-1, :])
    vec = s[:, 0] @ basis[:steps]
    return LanczosResult(theta, res, vec, steps)


def _start_vector(grid: Grid, W) -> np.ndarray:
    """Deterministic start vector: a unit-width Gaussian at the bottom of W with a
    linear factor so that both parities are represented."""
    x0 = grid.x[int(np.argmin(W))]
    y = grid.x - x0
    return np.exp(-0.5 * y * y) * (1.0 + 0.3 * y) + 1e-3 * np.exp(-0.05 * y * y)


def _projected_cg(grid, apply_A, b, q, precond, tol, maxiter, x0=None):
    """Preconditioned CG for A restricted to the complement of q.

    Every iterate, residual and preconditioned residual is projected with
    P = 1 - |q><q|/<q,q>.  Returns (x, residual_norm, iterations, breakdown).
    """
    qn = q / grid.l2(q)

    def P(v):
        return v - qn * (grid.h * np.vdot(qn, v))

    b = P(b)
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = P(np.asarray(x0, dtype=b.dtype))
        r = b - P(apply_A(x))
    rnorm = grid.l2(r)
    if rnorm <= tol:
        return x, rnorm, 0, False
    z = P(precond(r))
    p = z.copy()
    rz = np.real(grid.h * np.vdot(r, z))
    for it in range(1, maxiter + 1):
        Ap = P(apply_A(p))
        pAp = np.real(grid.h * np.vdot(p, Ap))
        if not pAp > 0:
            return x, rnorm, it, True
        a = rz / pAp
        x = x + a * p
        r = r - a * Ap
        rnorm = grid.l2(r)
        if rnorm <= tol:
            return P(x), rnorm, it, False
        z = P(precond(r))
        rz_new = np.real(grid.h * np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    return P(x), rnorm, maxiter, False


def _refine(grid, W, x, tol_unit, max_refine, inner_maxiter=300):
    """Rayleigh-quotient inverse iteration in correction form (see module doc)."""
    x = x / grid.l2(x)
    sigma = np.nan
    rnorm = np.inf
    for it in range(max_refine + 1):
        Hx = apply_hamiltonian(grid, W, x)
        sigma = float(np.real(grid.inner(x, Hx)))
        r = Hx - sigma * x
        rnorm = grid.l2(r)
        if rnorm <= tol_unit or it == max_refine:
            break

        def A(v, _s=sigma):
            return apply_hamiltonian(grid, W, v) - _s * v

        precond = _kinetic_inverse(grid, max(1.0, -sigma))
        inner_tol = max(1e-3 * rnorm * min(1.0, rnorm), 0.05 * tol_unit)
        t, _, _, _ = _projected_cg(grid, A, -r, x, precond, inner_tol, inner_maxiter)
        x = x + t
        x = x / grid.l2(x)
    return sigma, x, rnorm, it


def ground_state(
    grid: Grid,
    W,
    mass: float = 1.0,
    tol: float = 1e-10,
    *,
    guess=None,
    max_lanczos: int = 120,
    max_refine: int = 30,
    gap_tol: float = DEFAULT_GAP_TOL,
) -> GroundState:
    """Lowest eigenpair of -d^2/dx^2 + W, normalized to ||psi||_2 = mass.

    ``mass`` is the target L2 norm.  The sign is fixed so that the sample of
    largest modulus is positive.  With a ``guess`` (e.g. the previous time
    step's eigenfunction) Lanczos starts from it and needs only a few steps.
    """
    W = np.asarray(grid.check(W), dtype=float)
    if max_lanczos < 1 or max_refine < 0:
        raise ValueError("solver budget must be positive")
    if guess is None:
        v0 = _start_vector(grid, W)
        lz_tol = 1e-3
    else:
        v0 = np.asarray(guess, dtype=float)
        max_lanczos = min(max_lanczos, 12)
        lz_tol = 1e-2
    lz = lanczos(lambda v: apply_hamiltonian(grid, W, v), v0, max_steps=max_lanczos, tol=lz_tol)
    if lz.ritz_values[0] >= -gap_tol:
        raise NoNegativeEigenvalue(
            f"lowest Ritz value {lz.ritz_values[0]:.3e} is not below -{gap_tol:g}"
        )
    x = np.real(lz.vector)
    E, x, rnorm, its = _refine(grid, W, x, tol / mass, max_refine)
    if not np.isfinite(E) or rnorm * mass > tol:
        raise NoConvergence(f"ground state residual {rnorm * mass:.3e} exceeds tol {tol:.1e}")
    if E >= -gap_tol:
        raise NoNegativeEigenvalue(f"refined ground energy {E:.3e} is not below -{gap_tol:g}")
    psi = x * (mass / grid.l2(x))
    if psi[int(np.argmax(np.abs(psi)))] < 0:
        psi = -psi
    return GroundState(E, psi, rnorm * mass, lz.steps + its)


def ritz_negative_count(grid: Grid, W, gap_tol: float = DEFAULT_GAP_TOL, max_steps: int = 600) -> int:
    """Number of Lanczos Ritz values below -gap_tol (a lower bound on the
    number of negative eigenvalues, exact once the low Ritz values converge)."""
    W = np.asarray(grid.check(W), dtype=float)
    lz = lanczos(
        lambda v: apply_hamiltonian(grid, W, v),
        _start_vector(grid, W),
        max_steps=max_steps,
        tol=1e-8,
        n_track=6,
    )
    return int(np.sum(lz.ritz_values < -gap_tol))


def spectral_report(
    grid: Grid,
    W,
    rho_tol: float = DEFAULT_RHO_TOL,
    boundary_tol: float = DEFAULT_BOUNDARY_TOL,
) -> SpectralReport:
    """Zero-energy shooting diagnostic for -d^2/dx^2 + W.

    Solves -u'' + W u = 0 from the left end with u = 1, u' = 0 (classical RK4
    on the grid, W at midpoints by trigonometric interpolation).  The number of
    sign changes of u counts the negative eigenvalues; the indicator
    rho = L|u'(L)| / (|u(L)| + L|u'(L)|) vanishes when u stays bounded, i.e. at
    a zero-energy resonance.
    """
    W = np.asarray(grid.check(W), dtype=float)
    edge = np.max(np.abs(W[grid.outer_mask(0.1)]))
    if not edge < boundary_tol:
        raise PotentialNotLocalized(
            f"|W| reaches {edge:.3e} on the outer 10% of the box (limit {boundary_tol:g})"
        )
    Wm = grid.half_shift(W)
    h = grid.h
    n = grid.N
    u = np.empty(n)
    up = np.empty(n)
    a, b = 1.0, 0.0
    u[0], up[0] = a, b
    for j in range(n - 1):
        w0, wm, w1 = W[j], Wm[j], W[j + 1]
        k1u, k1v = b, w0 * a
        k2u, k2v = b + 0.5 * h * k1v, wm * (a + 0.5 * h * k1u)
        k3u, k3v = b + 0.5 * h * k2v, wm * (a + 0.5 * h * k2u)
        k4u, k4v = b + h * k3v, w1 * (a + h * k3u)
        a = a + h / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        b = b + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        u[j + 1], up[j + 1] = a, b
    s = np.sign(u)
    s = s[s != 0]
    negative_count = int(np.count_nonzero(s[1:] != s[:-1]))
    slope = grid.L * abs(up[-1])
    rho = float(slope / (abs(u[-1]) + slope))
    return SpectralReport(negative_count, rho, bool(rho < rho_tol), u)


def constrained_resolvent_solve(
    grid: Grid,
    W,
    E: float,
    Q,
    rhs,
    tol: float = 1e-10,
    maxiter: int = 2000,
) -> np.ndarray:
    """Solve (-d^2/dx^2 + W - E) chi = P rhs with <Q, chi> = 0.

    P = 1 - |Q><Q|/||Q||^2.  The operator is positive on the complement of Q
    when E is the ground energy, so projected preconditioned CG applies; the
    preconditioner is (-d^2/dx^2 - E)^{-1}.
    """
    W = np.asarray(grid.check(W), dtype=float)
    Q = np.asarray(grid.check(Q), dtype=float)
    rhs = grid.check(rhs)
    if not grid.l2(Q) > 0:
        raise ValueError("Q must be nonzero")

    def A(v):
        return apply_hamiltonian(grid, W, v) - E * v

    precond = _kinetic_inverse(grid, -E if E < 0 else 1.0)
    chi, rnorm, its, breakdown = _projected_cg(grid, A, rhs, Q, precond, tol, maxiter)
    if breakdown or rnorm > tol:
        raise NoConvergence(
            f"constrained resolvent: residual {rnorm:.3e} after {its} iterations (tol {tol:.1e})"
        )
    return chi
