r"""Uniform-grid realization of the weighted diffusion operator and kernels.

The working model lives on :math:`(0, L)` with no-flux boundaries. Every
integral in the package is the composite trapezoid rule on the nodes
:math:`x_j = j\,\Delta x`, and the operator

.. math::

    P_0 u = (e^{\alpha x} u_x)_x

is discretized in conservative flux form with the trapezoid weights as
control-volume widths, so that ``W @ P0`` is exactly symmetric, the range
of ``P0`` is exactly the set of fields with zero trapezoid integral and
``apply_P0`` annihilates constants bit-for-bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from scipy.integrate import cumulative_trapezoid

from .errors import LengthMismatch, NotInRange

DEFAULT_N_CELLS = 256


@dataclass(frozen=True)
class Grid:
    """Uniform nodes on ``[0, L]`` with trapezoid weights."""

    L: float
    n_cells: int
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = np.linspace(0.0, self.L, self.n_cells + 1)
        w = np.full(self.n_cells + 1, self.L / self.n_cells)
        w[0] *= 0.5
        w[-1] *= 0.5
        x.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "weights", w)

    @property
    def dx(self) -> float:
        return self.L / self.n_cells

    @property
    def size(self) -> int:
        return self.n_cells + 1

    def integrate(self, f):
        return self.weights @ f


def check_length(u, n):
    if np.shape(u)[-1] != n:
        raise LengthMismatch(f"field has length {np.shape(u)[-1]}, grid has {n} nodes")


def kernel_apply(kernel, grid: Grid, f):
    """Quadrature of ``∫ K(x, y) f(y) dy`` at every node (no exponential weight)."""
    f = np.asarray(f)
    if kernel.variant == "delta":
        return f.copy()
    if kernel.variant == "cumulative":
        return cumulative_trapezoid(f, dx=grid.dx, initial=0.0)
    return (np.asarray(kernel.matrix) * grid.weights) @ f


def kernel_quadrature_matrix(kernel, grid: Grid) -> np.ndarray:
    """Dense ``Khat`` with ``Khat @ f ≈ ∫ K(·, y) f(y) dy``."""
    n = grid.size
    if kernel.variant == "delta":
        return np.eye(n)
    if kernel.variant == "cumulative":
        dx = grid.dx
        khat = np.tril(np.full((n, n), dx))
        khat[:, 0] = 0.5 * dx
        khat[np.diag_indices(n)] = 0.5 * dx
        khat[0, 0] = 0.0
        return khat
    return np.asarray(kernel.matrix, dtype=float) * grid.weights


@dataclass(frozen=True, eq=False)
class DiscreteOperators:
    """Assembled operators for one (α, L, n_cells, kernel) configuration.

    Attributes
    ----------
    grid : Grid
    alpha : float
    e : ndarray
        Nodal advection weight ``exp(alpha * x)``.
    flux : ndarray
        Face coefficients ``exp(alpha * x_{j+1/2}) / dx``.
    P0 : ndarray
        Dense matrix of the flux-form operator.
    khat : ndarray
        Raw kernel quadrature matrix; ``Kmat = khat @ diag(e)``.
    growth : ndarray
        Growth profile ``m`` at the nodes.
    """

    grid: Grid
    alpha: float
    e: np.ndarray
    flux: np.ndarray
    P0: np.ndarray
    khat: np.ndarray
    growth: np.ndarray
    kernel_variant: str

    @property
    def n(self) -> int:
        return self.grid.size

    @property
    def w(self) -> np.ndarray:
        return self.grid.weights

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def W1(self) -> np.ndarray:
        """Diagonal of the weight realizing ``<., .>_1``: ``e^{αx}`` times quadrature weights."""
        return self.w * self.e

    @cached_property
    def Kmat(self) -> np.ndarray:
        """Matrix of ``u ↦ ∫ K(·, y) e^{αy} u(y) dy``."""
        return self.khat * self.e

    @cached_property
    def Kstar(self) -> np.ndarray:
        """Matrix of ``f ↦ ∫ K(y, ·) f(y) dy``, the W-adjoint of ``khat``."""
        w = self.w
        return (self.khat.T * w) / w[:, None]

    def K(self, v):
        """Apply ``Kmat``; diagonal shortcut for the δ-kernel."""
        if self.kernel_variant == "delta":
            return self.e * v
        return self.Kmat @ v

    def apply_P0(self, u):
        """Flux-form ``P0 u``; exactly zero on constant fields."""
        u = np.asarray(u)
        F = self.flux * np.diff(u, axis=-1)
        out = np.zeros_like(F, shape=u.shape)
        out[..., :-1] += F
        out[..., 1:] -= F
        return out / self.w

    def apply_A(self, u):
        """``e^{-αx} P0 u``, the generator of the diffusion semigroup."""
        return self.apply_P0(u) / self.e

    @cached_property
    def _bidiagonal(self) -> np.ndarray:
        # -W P0 = G^T C G, so the pencil (-W P0, W) has spectrum sigma(B)^2
        n = self.n
        G = np.zeros((n - 1, n))
        idx = np.arange(n - 1)
        G[idx, idx] = -1.0
        G[idx, idx + 1] = 1.0
        return (np.sqrt(self.flux)[:, None] * G) / np.sqrt(self.w)

    @cached_property
    def pencil_spectrum(self):
        """Eigenpairs of ``-P0 φ = λ φ`` in the plain trapezoid inner product.

        Returns ascending eigenvalues and W-orthonormal eigenvectors.
        """
        B = np.vstack([self._bidiagonal, np.zeros((1, self.n))])
        _, s, vt = np.linalg.svd(B)
        order = np.argsort(s)
        lam = s[order] ** 2
        vecs = vt[order].T / np.sqrt(self.w)[:, None]
        return lam, vecs

    @cached_property
    def lambda2(self) -> float:
        """Second eigenvalue of ``-P0``; smallest nonzero squared singular value."""
        s = sla.svdvals(self._bidiagonal)
        return float(np.min(s) ** 2)

    @cached_property
    def _bordered_lu(self):
        n = self.n
        M = np.zeros((n + 1, n + 1))
        M[:n, :n] = self.P0
        M[:n, n] = 1.0
        M[n, :n] = self.w
        return sla.lu_factor(M)

    def integrate(self, f):
        return self.w @ f


def assemble(params) -> DiscreteOperators:
    """Build the discrete operators for ``params``."""
    grid = Grid(params.L, params.n_cells)
    x, w = grid.nodes, grid.weights
    alpha = float(params.alpha)
    e = np.exp(alpha * x)
    faces = 0.5 * (x[:-1] + x[1:])
    flux = np.exp(alpha * faces) / grid.dx
    n = grid.size
    P0 = np.zeros((n, n))
    i = np.arange(n - 1)
    P0[i, i + 1] += flux
    P0[i, i] -= flux
    P0[i + 1, i] += flux
    P0[i + 1, i + 1] -= flux
    P0 /= w[:, None]
    for arr in (e, flux, P0):
        arr.flags.writeable = False
    khat = kernel_quadrature_matrix(params.kernel, grid)
    growth = params.growth.evaluate(x, params.L)
    return DiscreteOperators(
        grid=grid,
        alpha=alpha,
        e=e,
        flux=flux,
        P0=P0,
        khat=khat,
        growth=growth,
        kernel_variant=params.kernel.variant,
    )


def inner(u, v, ops: DiscreteOperators):
    """Plain product ``∫ conj(u) v dx``."""
    check_length(u, ops.n)
    check_length(v, ops.n)
    return np.sum(ops.w * np.conj(u) * v)


def inner1(u, v, ops: DiscreteOperators):
    """Weighted product ``∫ e^{αx} conj(u) v dx`` (conjugate-linear in ``u``)."""
    check_length(u, ops.n)
    check_length(v, ops.n)
    return np.sum(ops.w * ops.e * np.conj(u) * v)


def norm_Y(u, ops: DiscreteOperators) -> float:
    return float(np.sqrt(np.real(inner(u, u, ops))))


def mean_zero_project(u, ops: DiscreteOperators):
    """Remove the unweighted mean: ``u - (∫u dx)/L``."""
    u = np.asarray(u)
    return u - ops.integrate(u) / ops.grid.L


def solve_P0_on_X1(rhs, ops: DiscreteOperators, tol: float = 1e-8, scale=None):
    """Unique mean-zero ``z`` with ``P0 z = rhs``.

    Parameters
    ----------
    scale : float, optional
        Magnitude against which the integral of ``rhs`` is judged. Callers
        that build ``rhs`` as a cancelling sum pass the size of the terms;
        the default is ``max |rhs|``.

    Raises
    ------
    NotInRange
        If ``rhs`` has a non-negligible integral.
    """
    rhs = np.asarray(rhs)
    check_length(rhs, ops.n)
    if scale is None:
        scale = float(np.max(np.abs(rhs)))
    scale = ops.grid.L * max(scale, np.finfo(float).tiny)
    mismatch = abs(ops.integrate(rhs))
    if mismatch > tol * scale:
        raise NotInRange(
            f"right side has integral {mismatch:.3e}, not in the range of P0",
            integral=mismatch,
        )
    lu = ops._bordered_lu

    def _solve(b):
        return sla.lu_solve(lu, np.append(b, 0.0))[:-1]

    if np.iscomplexobj(rhs):
        return _solve(rhs.real) + 1j * _solve(rhs.imag)
    return _solve(rhs)
