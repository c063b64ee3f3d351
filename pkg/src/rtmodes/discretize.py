"""C1 cubic Hermite discretization of clamped profiles on (-b, 1) and the
three quadratic forms of the modal variational problem.

A profile is stored by its nodal values and slopes; the two DOFs at the
bottom node x3 = -b are dropped, so every coefficient vector satisfies
psi(-b) = psi'(-b) = 0.  Forms are stored as matrices ``M`` with
``Q(p) = p @ M @ p`` (the 1/2 factors of the energies live inside ``M``).

E1 and J also carry a sparse square-root factor ``B`` with ``M = B.T @ B``
(rows = weighted integrand samples at the Gauss points).  Values are taken
as ``||B p||^2``: on fine meshes ``p @ M @ p`` cancels entries of size
1/h^3 down to O(1) and loses most of its digits, the sum of squares does not.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import kernels
from .params import FluidConfig, jump_density

FORM_KINDS = ("E1", "E0", "J")
# neighbouring nodes share an element, so DOF couplings reach 3 off the diagonal
HERMITE_BANDWIDTH = 3


def to_band(M: np.ndarray, kd: int) -> np.ndarray:
    n = M.shape[0]
    band = np.zeros((n, kd + 1))
    for d in range(kd + 1):
        band[: n - d, d] = np.diagonal(M, d)
    return band


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    n_lower: int
    n_upper: int

    @property
    def b(self) -> float:
        return -float(self.nodes[0])

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1

    @property
    def n_dof(self) -> int:
        return 2 * self.nodes.size - 2

    @property
    def interface_node(self) -> int:
        return self.n_lower

    @property
    def top_node(self) -> int:
        return self.nodes.size - 1

    def dof(self, node: int, slope: bool = False) -> int:
        """Reduced DOF index of a node's value (or slope)."""
        if node == 0:
            raise ValueError("the bottom node carries no free DOFs")
        return 2 * node + int(slope) - 2

    def layer_values(self, lower, upper) -> np.ndarray:
        """Per-element array taking ``lower`` on (-b, 0) and ``upper`` on (0, 1)."""
        return np.concatenate([np.full(self.n_lower, float(lower)), np.full(self.n_upper, float(upper))])


def build_mesh(b: float, n_lower: int, n_upper: int) -> Mesh:
    if n_lower < 2 or n_upper < 2:
        raise ValueError(f"need at least 2 elements per layer, got ({n_lower}, {n_upper})")
    if not b > 0:
        raise ValueError("b must be > 0")
    lower = np.linspace(-b, 0.0, n_lower + 1)
    upper = np.linspace(0.0, 1.0, n_upper + 1)
    nodes = np.concatenate([lower, upper[1:]])
    nodes.setflags(write=False)
    return Mesh(nodes, int(n_lower), int(n_upper))


def default_mesh(cfg: FluidConfig, n: int = 128) -> Mesh:
    return build_mesh(cfg.b, n, n)


def quadrature_points(mesh: Mesh):
    """Gauss points and weights on every element (never on a node), plus an
    ``upper`` mask marking points in (0, 1)."""
    h = np.diff(mesh.nodes)
    x = (mesh.nodes[:-1, None] + h[:, None] * kernels.GAUSS_T[None, :]).ravel()
    w = (h[:, None] * kernels.GAUSS_W[None, :]).ravel()
    upper = np.repeat(np.arange(mesh.n_elements) >= mesh.n_lower, kernels.GAUSS_T.size)
    return x, w, upper


@dataclass(frozen=True, eq=False)
class Profile:
    coeffs: np.ndarray

    def full(self) -> np.ndarray:
        """Coefficients with the clamped bottom DOFs restored."""
        return np.concatenate([[0.0, 0.0], self.coeffs])

    def __add__(self, other):
        return Profile(self.coeffs + other.coeffs)

    def __mul__(self, c):
        return Profile(c * self.coeffs)

    __rmul__ = __mul__


def profile_from_function(mesh: Mesh, f, df) -> Profile:
    """Hermite interpolant of ``f`` (with derivative ``df``); ``f(-b)`` and
    ``df(-b)`` are discarded."""
    x = mesh.nodes
    full = np.empty(2 * x.size)
    full[0::2] = [f(v) for v in x]
    full[1::2] = [df(v) for v in x]
    return Profile(full[2:])


def evaluate_profile(p: Profile, mesh: Mesh, x3, deriv: int = 0, side: str = "right"):
    """psi, psi', psi'' (or the piecewise-constant psi''') at ``x3``.

    At a node, derivatives of order >= 2 are one-sided; ``side`` picks the
    element ("right" = above the node, "left" = below).
    """
    if deriv not in (0, 1, 2, 3):
        raise ValueError("deriv must be 0, 1, 2 or 3")
    scalar = np.ndim(x3) == 0
    x = np.atleast_1d(np.asarray(x3, dtype=float))
    lo, hi = mesh.nodes[0], mesh.nodes[-1]
    if np.any(x < lo) or np.any(x > hi) or np.any(~np.isfinite(x)):
        raise ValueError(f"x3 outside the domain [{lo}, {hi}]")
    vals = kernels.hermite_eval(mesh.nodes, p.full(), x, deriv, 1 if side == "right" else -1)
    return float(vals[0]) if scalar else vals


@dataclass(frozen=True, eq=False)
class QuadForm:
    entries: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)
    factor: sp.csr_matrix | None = None

    def value(self, p) -> float:
        c = p.coeffs if isinstance(p, Profile) else np.asarray(p)
        if self.factor is not None:
            y = self.factor @ c
            return float(y @ y)
        return float(c @ self.entries @ c)

    def bilinear(self, p, q) -> float:
        a = p.coeffs if isinstance(p, Profile) else np.asarray(p)
        c = q.coeffs if isinstance(q, Profile) else np.asarray(q)
        return float(a @ self.entries @ c)


def _assembled(mesh: Mesh, cfg: FluidConfig, xi_abs: float):
    if not xi_abs > 0:
        raise ValueError("xi_abs must be > 0")
    rho_e = mesh.layer_values(cfg.rho_minus, cfg.rho_plus)
    mu_e = mesh.layer_values(cfg.mu_minus, cfg.mu_plus)
    E1, J = kernels.assemble_forms(
        np.ascontiguousarray(mesh.nodes), rho_e, mu_e, float(xi_abs), kernels.GAUSS_T, kernels.GAUSS_W
    )
    # exact symmetry; accumulation order can leave last-bit differences
    E1 = 0.5 * (E1 + E1.T)
    J = 0.5 * (J + J.T)
    return E1[2:, 2:], J[2:, 2:]


def square_root_factors(mesh: Mesh, cfg: FluidConfig, xi_abs: float):
    """Sparse ``B_E1``, ``B_J`` with ``E1 = B_E1.T @ B_E1`` and ``J = B_J.T @ B_J``."""
    k2 = float(xi_abs) ** 2
    h = np.diff(mesh.nodes)
    ne, nq = h.size, kernels.GAUSS_T.size
    tt = np.broadcast_to(kernels.GAUSS_T, (ne, nq))
    n0 = kernels.shape_numpy(tt, h[:, None], 0)
    n1 = kernels.shape_numpy(tt, h[:, None], 1)
    n2 = kernels.shape_numpy(tt, h[:, None], 2)
    w = kernels.GAUSS_W[None, :] * h[:, None]
    rho = mesh.layer_values(cfg.rho_minus, cfg.rho_plus)[:, None]
    mu = mesh.layer_values(cfg.mu_minus, cfg.mu_plus)[:, None]
    cols = np.broadcast_to((2 * np.arange(ne)[:, None] + np.arange(4))[:, None, :], (ne, nq, 4))

    def block(values, scale):
        data = (np.sqrt(scale)[:, :, None] * values).ravel()
        rows = np.broadcast_to(np.arange(ne * nq).reshape(ne, nq, 1), (ne, nq, 4)).ravel()
        return sp.csr_matrix((data, (rows, cols.ravel())), shape=(ne * nq, 2 * mesh.nodes.size))

    B_E1 = sp.vstack([block(n1, 2.0 * k2 * mu * w), block(k2 * n0 + n2, 0.5 * mu * w)])
    B_J = sp.vstack([block(n0, 0.5 * k2 * rho * w), block(n1, 0.5 * rho * w)])
    return B_E1.tocsc()[:, 2:].tocsr(), B_J.tocsc()[:, 2:].tocsr()


def assemble_E1(mesh: Mesh, cfg: FluidConfig, xi_abs: float) -> QuadForm:
    E1, _ = _assembled(mesh, cfg, xi_abs)
    B, _ = square_root_factors(mesh, cfg, xi_abs)
    return QuadForm(E1, "E1", {"xi_abs": xi_abs}, B)


def assemble_J(mesh: Mesh, cfg: FluidConfig, xi_abs: float) -> QuadForm:
    _, J = _assembled(mesh, cfg, xi_abs)
    _, B = square_root_factors(mesh, cfg, xi_abs)
    return QuadForm(J, "J", {"xi_abs": xi_abs}, B)


def e0_coefficients(cfg: FluidConfig, xi_abs: float) -> tuple[float, float]:
    """Weights of |psi(1)|^2 and |psi(0)|^2 in E0."""
    k2 = xi_abs * xi_abs
    top = 0.5 * k2 * (cfg.sigma_plus * k2 + cfg.g * cfg.rho_plus)
    interface = 0.5 * k2 * (cfg.sigma_minus * k2 - cfg.g * jump_density(cfg))
    return top, interface


def assemble_E0(mesh: Mesh, cfg: FluidConfig, xi_abs: float) -> QuadForm:
    if not xi_abs > 0:
        raise ValueError("xi_abs must be > 0")
    top, interface = e0_coefficients(cfg, xi_abs)
    M = np.zeros((mesh.n_dof, mesh.n_dof))
    M[mesh.dof(mesh.top_node), mesh.dof(mesh.top_node)] = top
    M[mesh.dof(mesh.interface_node), mesh.dof(mesh.interface_node)] = interface
    return QuadForm(M, "E0", {"xi_abs": xi_abs})


@dataclass(frozen=True, eq=False)
class ModalForms:
    """E1, E0 and J assembled once for a fixed |xi|."""

    mesh: Mesh
    cfg: FluidConfig
    xi_abs: float
    E1: QuadForm
    E0: QuadForm
    J: QuadForm

    def energy(self, s: float) -> np.ndarray:
        return s * self.E1.entries + self.E0.entries

    def rayleigh(self, s: float, c: np.ndarray) -> float:
        """(s E1 + E0)(c) / J(c), evaluated without cancellation."""
        return (s * self.E1.value(c) + self.E0.value(c)) / self.J.value(c)

    @cached_property
    def bands(self):
        """Upper band storage ``band[i, d] = M[i, i + d]`` of E1, E0 and J."""
        return tuple(to_band(f.entries, HERMITE_BANDWIDTH) for f in (self.E1, self.E0, self.J))

    def energy_band(self, s: float) -> np.ndarray:
        b1, b0, _ = self.bands
        return s * b1 + b0


def assemble_all(mesh: Mesh, cfg: FluidConfig, xi_abs: float) -> ModalForms:
    E1, J = _assembled(mesh, cfg, xi_abs)
    B_E1, B_J = square_root_factors(mesh, cfg, xi_abs)
    return ModalForms(
        mesh,
        cfg,
        float(xi_abs),
        QuadForm(E1, "E1", {"xi_abs": xi_abs}, B_E1),
        assemble_E0(mesh, cfg, xi_abs),
        QuadForm(J, "J", {"xi_abs": xi_abs}, B_J),
    )
