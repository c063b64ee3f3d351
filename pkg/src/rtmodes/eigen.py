"""Constrained minimization alpha(|xi|; s) = inf { s E1 + E0 : J = 1 }.

The discrete problem is the generalized symmetric-definite eigenproblem
``(s E1 + E0) psi = alpha J psi``; ``solve_alpha`` takes its smallest
eigenpair with a dense LAPACK solve.  ``oracle_alpha`` reaches the same
number by steepest descent on the Rayleigh quotient and shares nothing with
the LAPACK path beyond the assembled forms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import kernels
from .discretize import Mesh, ModalForms, Profile, assemble_all
from .params import FluidConfig

MULTIPLICITY_TOL = 1e-12


class EigenConvergenceError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True, eq=False)
class AlphaResult:
    alpha: float
    psi: Profile
    residual: float
    s: float
    xi_abs: float
    multiplicity: int = 1


def _forms(mesh, cfg, xi_abs):
    if isinstance(mesh, ModalForms):
        return mesh
    return assemble_all(mesh, cfg, xi_abs)


def smallest_alpha(forms: ModalForms, s: float) -> float:
    """Smallest generalized eigenvalue.

    LAPACK supplies the eigenvector; the value is its Rayleigh quotient taken
    through the square-root factors, which is accurate to a few ulps where the
    LAPACK eigenvalue itself carries errors of order eps * cond(J) * ||E1||.
    """
    return alpha_pair(forms, s)[0]


INVERSE_MAXITER = 400
INVERSE_TOL = 1e-10
SHIFT_MARGINS = (1e-6, 1e-4, 1e-2)


def alpha_pair(forms: ModalForms, s: float, lower: float | None = None, start=None):
    """(alpha, eigenvector) at ``s``.

    Given a certified lower bound ``lower`` on alpha(s) (for instance alpha
    at a smaller s, since alpha is increasing in s) and a start vector, the
    pair comes from banded inverse iteration shifted just below ``lower``.
    A successful banded Cholesky of A - shift J certifies shift < alpha, so
    the iteration can only converge to the smallest eigenpair.  Anything
    else falls back to the dense solve.
    """
    if lower is not None and start is not None:
        A, Jb = forms.energy_band(s), forms.bands[2]
        x0 = np.ascontiguousarray(start, dtype=float)
        # on fine meshes rounding in A - shift J can spoil definiteness close to alpha
        for margin in SHIFT_MARGINS:
            shift = lower - margin * abs(lower) - 1e-300
            x, _, status = kernels.inverse_iteration(A, Jb, float(shift), x0, INVERSE_MAXITER, INVERSE_TOL)
            if status == 1:
                return forms.rayleigh(s, x), x
            if status == 0:
                break
    _, v = sla.eigh(forms.energy(s), forms.J.entries, subset_by_index=[0, 0], check_finite=False)
    return forms.rayleigh(s, v[:, 0]), v[:, 0]


def _sign_convention(psi: np.ndarray, mesh: Mesh) -> np.ndarray:
    v0 = psi[mesh.dof(mesh.interface_node)]
    scale = np.linalg.norm(psi)
    if abs(v0) >= 1e-14 * scale:
        return psi if v0 >= 0 else -psi
    v1 = psi[mesh.dof(mesh.top_node)]
    return psi if v1 >= 0 else -psi


def backward_error(forms: ModalForms, s: float, alpha: float, psi: np.ndarray) -> float:
    """||(A - alpha J) psi|| / ((||A||_F + |alpha| ||J||_F) ||psi||)."""
    A = forms.energy(s)
    Jm = forms.J.entries
    r = A @ psi - alpha * (Jm @ psi)
    denom = (np.linalg.norm(A) + abs(alpha) * np.linalg.norm(Jm)) * np.linalg.norm(psi)
    return float(np.linalg.norm(r) / denom)


def solve_alpha(mesh, cfg: FluidConfig, xi_abs: float, s: float) -> AlphaResult:
    """Smallest eigenpair of (s E1 + E0) psi = alpha J psi, normalized to J(psi) = 1.

    ``mesh`` may also be a pre-assembled :class:`ModalForms`.
    """
    if not s > 0:
        raise ValueError("s must be > 0")
    forms = _forms(mesh, cfg, xi_abs)
    w, v = sla.eigh(forms.energy(s), forms.J.entries, subset_by_index=[0, 1], check_finite=False)
    psi = v[:, 0]
    psi = psi / np.sqrt(psi @ forms.J.entries @ psi)
    psi = _sign_convention(psi, forms.mesh)
    alpha = forms.rayleigh(s, psi)
    mult = 2 if abs(w[1] - w[0]) <= MULTIPLICITY_TOL * (1.0 + abs(w[0])) else 1
    res = backward_error(forms, s, alpha, psi)
    if not np.isfinite(res) or res > 1e-9:
        raise EigenConvergenceError(f"generalized eigensolve residual {res:.3e} too large", res)
    return AlphaResult(alpha, Profile(psi), res, float(s), float(forms.xi_abs), mult)


def oracle_alpha(
    mesh, cfg: FluidConfig, xi_abs: float, s: float, *, n_starts: int = 32, seed: int = 0, maxiter: int = 10_000
) -> float:
    """Best Rayleigh-quotient value found by steepest descent from random starts.

    Every start only ever decreases E/J, so the result is an upper bound on
    the discrete infimum.  Meant for small meshes (<= 16 elements per layer).
    """
    forms = _forms(mesh, cfg, xi_abs)
    A = np.ascontiguousarray(forms.energy(s))
    Jm = np.ascontiguousarray(forms.J.entries)
    Jinv = np.ascontiguousarray(sla.cho_solve(sla.cho_factor(Jm), np.eye(Jm.shape[0])))
    rng = np.random.default_rng(seed)
    starts = np.ascontiguousarray(rng.standard_normal((Jm.shape[0], n_starts)))
    best, _ = kernels.rayleigh_descent(A, Jm, Jinv, starts, int(maxiter), 5)
    return float(np.min(best))


def euler_lagrange_residual(res: AlphaResult, mesh, cfg: FluidConfig) -> float:
    """Dual norm of (s E1 + E0 - alpha J) psi, measured against the J-norm on test profiles.

    With the J-norm ``||v||^2 = J(v)``, the dual norm of a functional ``r`` is
    ``sqrt(r^T Jm^{-1} r)``.
    """
    forms = _forms(mesh, cfg, res.xi_abs)
    Jm = forms.J.entries
    c = res.psi.coeffs
    B1, BJ = forms.E1.factor, forms.J.factor
    r = res.s * (B1.T @ (B1 @ c)) + forms.E0.entries @ c - res.alpha * (BJ.T @ (BJ @ c))
    y = sla.cho_solve(sla.cho_factor(Jm), r)
    return float(np.sqrt(max(r @ y, 0.0)))
