r"""Problem definition for the delayed nonlocal logistic model with advection.

After the exponential change of variables the model reads

.. math::

    u_t = e^{-\alpha x}(e^{\alpha x} u_x)_x
          + r u \Big(m(x) - \int_0^L K(x, y) e^{\alpha y} u(y, t-\tau)\,dy\Big),
    \qquad u_x(0, t) = u_x(L, t) = 0,

with the diffusion rate scaled to one. The delay ``tau`` reported anywhere
in the package is the delay of this transformed model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import quad

from . import discretize
from .errors import LengthMismatch, ModelError, ZeroKernelMass

GROWTH_VARIANTS = ("constant", "linear", "linear_decreasing", "sine_peak", "tabulated")
KERNEL_VARIANTS = ("delta", "cumulative", "tabulated")

# below this |alpha L| the closed forms switch to their Taylor series
_SERIES_CUTOFF = 1e-6
_LINEAR_SERIES_CUTOFF = 1e-2


@dataclass(frozen=True)
class GrowthSpec:
    """Intrinsic growth profile ``m(x)``.

    ``constant`` and ``linear_decreasing`` use ``m0``; ``tabulated`` uses
    ``values`` at the grid nodes.
    """

    variant: str = "constant"
    m0: float = 1.0
    values: tuple | None = None

    def __post_init__(self):
        if self.variant not in GROWTH_VARIANTS:
            raise ModelError(f"unknown growth variant {self.variant!r}")
        if self.variant == "constant" and not self.m0 > 0:
            raise ModelError("constant growth needs m0 > 0")
        if self.variant == "tabulated":
            if self.values is None:
                raise ModelError("tabulated growth needs values")
            vals = np.asarray(self.values, dtype=float)
            if np.any(vals < 0) or not np.max(vals) > 0:
                raise ModelError("tabulated growth must be >= 0 and not identically 0")
            object.__setattr__(self, "values", tuple(vals.tolist()))

    def evaluate(self, x, L: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.variant == "constant":
            return np.full_like(x, self.m0)
        if self.variant == "linear":
            return x.copy()
        if self.variant == "linear_decreasing":
            return self.m0 - x
        if self.variant == "sine_peak":
            return np.sin(np.pi * x / L)
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != x.shape:
            raise LengthMismatch(f"tabulated growth has {vals.size} values, grid has {x.size}")
        return vals


@dataclass(frozen=True)
class KernelSpec:
    """Competition kernel ``K(x, y)``: ``delta``, ``cumulative`` or ``tabulated``."""

    variant: str = "delta"
    matrix: tuple | None = None

    def __post_init__(self):
        if self.variant not in KERNEL_VARIANTS:
            raise ModelError(f"unknown kernel variant {self.variant!r}")
        if self.variant == "tabulated":
            if self.matrix is None:
                raise ModelError("tabulated kernel needs a matrix")
            K = np.asarray(self.matrix, dtype=float)
            if K.ndim != 2 or K.shape[0] != K.shape[1]:
                raise ModelError("tabulated kernel must be a square matrix")
            if not np.all(np.isfinite(K)) or not np.any(K > 0):
                raise ModelError("tabulated kernel must be bounded with a positive entry")
            object.__setattr__(self, "matrix", tuple(map(tuple, K.tolist())))

    @property
    def sup_norm(self) -> float:
        if self.variant == "delta":
            return math.inf
        if self.variant == "cumulative":
            return 1.0
        return float(np.max(np.abs(np.asarray(self.matrix))))


@dataclass(frozen=True)
class ModelParams:
    alpha: float = 0.0
    L: float = 1.0
    r: float = 0.05
    tau: float = 0.0
    growth: GrowthSpec = field(default_factory=GrowthSpec)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    n_cells: int = discretize.DEFAULT_N_CELLS

    def __post_init__(self):
        if not self.L > 0:
            raise ModelError("L must be positive")
        if int(self.n_cells) != self.n_cells or self.n_cells < 8:
            raise ModelError("n_cells must be an integer >= 8")
        if self.r < 0:
            raise ModelError("r must be >= 0")
        if self.tau < 0:
            raise ModelError("tau must be >= 0")
        if self.growth.variant == "linear_decreasing" and not self.growth.m0 > self.L:
            raise ModelError("linear_decreasing growth needs m0 > L")
        if self.kernel.variant == "tabulated":
            if len(self.kernel.matrix) != self.n_cells + 1:
                raise LengthMismatch("tabulated kernel size does not match the grid")
        m = self.growth.evaluate(np.linspace(0.0, self.L, self.n_cells + 1), self.L)
        if np.any(m < -1e-14) or not np.max(m) > 0:
            raise ModelError("growth must be nonnegative and not identically zero")

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


def _grid_and_weight(params):
    grid = discretize.Grid(params.L, params.n_cells)
    return grid, np.exp(params.alpha * grid.nodes)


def kernel_mass(params) -> float:
    """``∫∫ K(x, y) e^{αx+αy} dx dy`` by trapezoid quadrature."""
    grid, e = _grid_and_weight(params)
    return float(grid.integrate(e * discretize.kernel_apply(params.kernel, grid, e)))


def c0(params) -> float:
    """Constant the steady branch emanates from at ``r = 0``."""
    grid, e = _grid_and_weight(params)
    m = params.growth.evaluate(grid.nodes, params.L)
    denom = kernel_mass(params)
    if not denom > 0:
        raise ZeroKernelMass(f"kernel double integral is {denom:.3e}")
    return float(grid.integrate(m * e) / denom)


def _h0_quad(params) -> float:
    grid, e = _grid_and_weight(params)
    m = params.growth.evaluate(grid.nodes, params.L)
    return float(grid.integrate(m * e) / grid.integrate(e))


def h0_closed_form(growth: GrowthSpec, alpha: float, L: float) -> float | None:
    """Closed-form ``h0(α, L)`` where one is known, else ``None``."""
    s = alpha * L
    if growth.variant == "constant":
        return float(growth.m0)
    if growth.variant in ("linear", "linear_decreasing"):
        if abs(s) < _LINEAR_SERIES_CUTOFF:
            # the direct form cancels ~log10(1/|s|) digits; truncation here is O(s^7)
            hx = L * (0.5 + s / 12.0 - s**3 / 720.0 + s**5 / 30240.0)
        else:
            hx = (s * math.exp(s) - math.expm1(s)) / (alpha * math.expm1(s))
        return hx if growth.variant == "linear" else growth.m0 - hx
    if growth.variant == "sine_peak":
        if abs(s) < _SERIES_CUTOFF:
            s_coth = 2.0 + s * s / 6.0
        else:
            s_coth = s * (math.exp(s) + 1.0) / math.expm1(s)
        return math.pi * s_coth / (math.pi**2 + s * s)
    return None


def h0_adaptive(growth: GrowthSpec, alpha: float, L: float) -> float:
    """``h0`` from adaptive quadrature of the continuous integrals."""
    num = quad(lambda x: float(growth.evaluate(np.array([x]), L)[0]) * math.exp(alpha * x),
               0.0, L, epsabs=0.0, epsrel=1e-13, limit=200)[0]
    s = alpha * L
    den = L * (1.0 + 0.5 * s) if abs(s) < 1e-8 else math.expm1(s) / alpha
    return num / den


def h0(params, return_closed_form: bool = False, rtol: float = 1e-8):
    """Weighted mean of the growth rate, ``∫ m e^{αx} / ∫ e^{αx}``.

    The returned value is the trapezoid quadrature on the model grid, so it
    is consistent with every other discrete quantity. For profiles with a
    closed form, the closed form is compared against adaptive quadrature and
    an ``AssertionError`` is raised on disagreement beyond ``rtol``.
    """
    value = _h0_quad(params)
    closed = h0_closed_form(params.growth, params.alpha, params.L)
    if closed is not None:
        reference = h0_adaptive(params.growth, params.alpha, params.L)
        if abs(reference - closed) > rtol * abs(closed):
            raise AssertionError(
                f"h0 closed form {closed!r} disagrees with quadrature {reference!r}"
            )
    if return_closed_form:
        return value, closed
    return value


def transform_to_original(u, params):
    """Undo the exponential substitution: nodal ``e^{αx} u``."""
    grid, e = _grid_and_weight(params)
    discretize.check_length(u, grid.size)
    return e * np.asarray(u)


def transform_from_original(u, params):
    grid, e = _grid_and_weight(params)
    discretize.check_length(u, grid.size)
    return np.asarray(u) / e
