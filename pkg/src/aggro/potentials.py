"""Interaction potentials and their minimal-norm gradients.

Every potential is even with W(0) = 0 and exposes the gradient with the
convention grad(0) = 0, which removes self-interaction of atoms.  Gradients
are analytic closed forms, never numerical differentiation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .measures import Grid1D, Grid2D

__all__ = ["Potential", "make_potential", "kernel_table", "kernel_tables_2d",
           "value_table", "value_table_2d", "CATALOGUE"]


@dataclass(frozen=True)
class Potential:
    """An interaction kernel W with closed-form gradient.

    ``covered_by_theory`` is True for symmetric potentials that are C1 away
    from the origin, at worst Lipschitz-pointy at the origin, and
    lambda-convex -- the class with a well-posedness and convergence
    guarantee.  ``lipschitz_on(D)`` bounds |grad W| on 0 < |x| <= D and may
    be infinite (then the solver must run with adaptive speed estimates).
    """

    name: str
    params: dict
    dims: frozenset
    globally_lipschitz: bool
    pointy: bool
    covered_by_theory: bool
    _value_r: Callable[[np.ndarray], np.ndarray] = field(repr=False, default=None)
    _grad_r: Callable[[np.ndarray], np.ndarray] = field(repr=False, default=None)
    _lipschitz_on: Callable[[float], float] = field(repr=False, default=None)
    _value_xy: Callable = field(repr=False, default=None)
    _grad_xy: Callable = field(repr=False, default=None)

    def lipschitz_on(self, diameter: float) -> float:
        if diameter <= 0.0:
            raise ValueError("diameter must be positive")
        return float(self._lipschitz_on(diameter))

    # -- 1D surface -------------------------------------------------------
    def value_1d(self, x) -> np.ndarray:
        self._need(1)
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        nz = x != 0.0
        out[nz] = self._value_r(np.abs(x[nz]))
        return out

    def grad_1d(self, x) -> np.ndarray:
        self._need(1)
        x = np.asarray(x, dtype=np.float64)
        out = np.zeros_like(x)
        nz = x != 0.0
        out[nz] = np.sign(x[nz]) * self._grad_r(np.abs(x[nz]))
        return out

    # -- 2D surface -------------------------------------------------------
    def value_2d(self, X, Y) -> np.ndarray:
        self._need(2)
        X = np.asarray(X, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        if self._value_xy is not None:
            return self._value_xy(X, Y)
        r = np.hypot(X, Y)
        out = np.zeros_like(r)
        nz = r != 0.0
        out[nz] = self._value_r(r[nz])
        return out

    def grad_2d(self, X, Y) -> tuple[np.ndarray, np.ndarray]:
        self._need(2)
        X = np.asarray(X, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        if self._grad_xy is not None:
            return self._grad_xy(X, Y)
        r = np.hypot(X, Y)
        gx = np.zeros_like(r)
        gy = np.zeros_like(r)
        nz = r != 0.0
        scale = self._grad_r(r[nz]) / r[nz]
        gx[nz] = scale * X[nz]
        gy[nz] = scale * Y[nz]
        return gx, gy

    def _need(self, d: int) -> None:
        if d not in self.dims:
            raise ValueError(f"potential {self.name!r} is not defined in {d}D")


def _radial(name, params, value_r, grad_r, lipschitz_on, *, globally_lipschitz,
            pointy, covered, dims=(1, 2)):
    return Potential(
        name=name, params=dict(params), dims=frozenset(dims),
        globally_lipschitz=globally_lipschitz, pointy=pointy,
        covered_by_theory=covered,
        _value_r=value_r, _grad_r=grad_r, _lipschitz_on=lipschitz_on,
    )


def _make_abs(params):
    sign = params.get("sign", 1.0)
    if sign not in (1.0, -1.0, 1, -1):
        raise ValueError("abs potential: sign must be +1 or -1")
    s = float(sign)
    return _radial(
        "abs" if s > 0 else "neg_abs", {"sign": s},
        lambda r: s * r,
        lambda r: s * np.ones_like(r),
        lambda D: 1.0,
        globally_lipschitz=True, pointy=True, covered=(s > 0),
    )


def _make_morse(params):
    a = float(params.get("a", 1.0))
    if a <= 0.0:
        raise ValueError("morse potential: parameter a must be > 0")
    return _radial(
        "morse", {"a": a},
        lambda r: 1.0 - np.exp(-a * r),
        lambda r: a * np.exp(-a * r),
        lambda D: a,
        globally_lipschitz=True, pointy=True, covered=True,
    )


def _make_quadratic_minus_abs(params):
    return _radial(
        "quadratic_minus_abs", {},
        lambda r: 0.5 * r * r - r,
        lambda r: r - 1.0,
        lambda D: max(1.0, D - 1.0),
        globally_lipschitz=False, pointy=True, covered=False,
    )


def _make_cubic_quadratic(params):
    def lip(D):
        inner = 0.25 if D >= 0.5 else D - D * D
        return inner if D <= 1.0 else max(0.25, D * D - D)
    return _radial(
        "cubic_quadratic", {},
        lambda r: r ** 3 / 3.0 - 0.5 * r * r,
        lambda r: r * r - r,
        lip,
        globally_lipschitz=False, pointy=False, covered=True,
    )


def _make_quartic(params):
    rstar = 1.0 / math.sqrt(3.0)
    peak = rstar - rstar ** 3
    def lip(D):
        inner = peak if D >= rstar else D - D ** 3
        return inner if D <= 1.0 else max(peak, D ** 3 - D)
    return _radial(
        "quartic", {},
        lambda r: 0.25 * r ** 4 - 0.5 * r * r,
        lambda r: r ** 3 - r,
        lip,
        globally_lipschitz=False, pointy=False, covered=True,
    )


def _make_quadratic_log(params):
    s = float(params.get("log_coeff", 1.0))
    if s <= 0.0:
        raise ValueError("quadratic_log potential: log_coeff must be > 0")
    return _radial(
        "quadratic_log", {"log_coeff": s},
        lambda r: 0.5 * r * r - s * np.log(r),
        lambda r: r - s / r,
        lambda D: math.inf,
        globally_lipschitz=False, pointy=False, covered=False,
    )


def _make_dlv(params):
    def grad(r):
        return np.where(r <= 1.0, 4.0 * r, 4.0)
    def value(r):
        return np.where(r <= 1.0, 2.0 * r * r, 4.0 * r - 2.0)
    return _radial(
        "dlv", {},
        value, grad,
        lambda D: 4.0 * min(D, 1.0),
        globally_lipschitz=True, pointy=False, covered=True,
    )


def _make_sqrt_form(params):
    b = float(params.get("b", 1.0))
    if abs(b) >= 2.0:
        raise ValueError("sqrt_form potential: need |b| < 2 for positive definiteness")

    def value_xy(X, Y):
        return np.sqrt(X * X + b * X * Y + Y * Y)

    def grad_xy(X, Y):
        q = X * X + b * X * Y + Y * Y
        gx = np.zeros_like(q)
        gy = np.zeros_like(q)
        nz = q != 0.0
        root = 2.0 * np.sqrt(q[nz])
        gx[nz] = (2.0 * X[nz] + b * Y[nz]) / root
        gy[nz] = (b * X[nz] + 2.0 * Y[nz]) / root
        return gx, gy

    return Potential(
        name="sqrt_form", params={"b": b}, dims=frozenset((2,)),
        globally_lipschitz=True, pointy=True, covered_by_theory=True,
        _lipschitz_on=lambda D: math.sqrt(1.0 + abs(b) / 2.0),
        _value_xy=value_xy, _grad_xy=grad_xy,
    )


CATALOGUE = {
    "abs": _make_abs,
    "neg_abs": lambda p: _make_abs({**p, "sign": -1.0}),
    "morse": _make_morse,
    "quadratic_minus_abs": _make_quadratic_minus_abs,
    "cubic_quadratic": _make_cubic_quadratic,
    "quartic": _make_quartic,
    "quadratic_log": _make_quadratic_log,
    "dlv": _make_dlv,
    "sqrt_form": _make_sqrt_form,
}


def make_potential(name: str, params: dict | None = None) -> Potential:
    """Build a catalogue potential by name."""
    try:
        factory = CATALOGUE[name]
    except KeyError:
        known = ", ".join(sorted(CATALOGUE))
        raise ValueError(f"unknown potential {name!r}; catalogue: {known}") from None
    return factory(dict(params or {}))


def _mirror_antisymmetric(upper: np.ndarray) -> np.ndarray:
    # upper holds values on the lexicographically positive half, zeros
    # elsewhere; upper - flip(upper) is bitwise antisymmetric by construction.
    if upper.ndim == 1:
        return upper - upper[::-1]
    return upper - upper[::-1, ::-1]


def kernel_table(p: Potential, grid: Grid1D) -> np.ndarray:
    """Gradient values at all signed gridpoint offsets k*dx, k = -n..n.

    The center entry is 0 and table[-k] == -table[k] bitwise.
    """
    n = grid.n_cells
    upper = np.zeros(2 * n + 1)
    r = grid.dx * np.arange(1, n + 1)
    upper[n + 1:] = p.grad_1d(r)
    table = _mirror_antisymmetric(upper)
    if not np.all(np.isfinite(table)):
        raise ValueError(
            f"potential {p.name!r} has a non-finite gradient at a nonzero grid offset"
        )
    table.setflags(write=False)
    return table


def kernel_tables_2d(p: Potential, grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    """Tables of dW/dx and dW/dy at offsets (k*dx, l*dy), k = -nx..nx,
    l = -ny..ny, with the (0,0) entry forced to 0 and exact antisymmetry
    under (k,l) -> (-k,-l)."""
    nx, ny = grid.nx, grid.ny
    ks = np.arange(-nx, nx + 1)
    ls = np.arange(-ny, ny + 1)
    K, L = np.meshgrid(ks * grid.dx, ls * grid.dy, indexing="ij")
    upper = (ks[:, None] > 0) | ((ks[:, None] == 0) & (ls[None, :] > 0))
    gx = np.zeros_like(K)
    gy = np.zeros_like(K)
    gxu, gyu = p.grad_2d(K[upper], L[upper])
    gx[upper] = gxu
    gy[upper] = gyu
    tx = _mirror_antisymmetric(gx)
    ty = _mirror_antisymmetric(gy)
    if not (np.all(np.isfinite(tx)) and np.all(np.isfinite(ty))):
        raise ValueError(
            f"potential {p.name!r} has a non-finite gradient at a nonzero grid offset"
        )
    tx.setflags(write=False)
    ty.setflags(write=False)
    return tx, ty


def value_table(p: Potential, grid: Grid1D) -> np.ndarray:
    """W at signed midpoint offsets k*dx, k = -(n-1)..(n-1); center 0."""
    n = grid.n_cells
    vals = np.zeros(2 * n - 1)
    r = grid.dx * np.arange(1, n)
    right = p.value_1d(r)
    vals[n:] = right
    vals[:n - 1] = right[::-1]
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"potential {p.name!r} has a non-finite value at a grid offset")
    vals.setflags(write=False)
    return vals


def value_table_2d(p: Potential, grid: Grid2D) -> np.ndarray:
    """W at vertex offsets (k*dx, l*dy), k = -(nx-1)..(nx-1); center 0."""
    nx, ny = grid.nx, grid.ny
    ks = np.arange(-(nx - 1), nx) * grid.dx
    ls = np.arange(-(ny - 1), ny) * grid.dy
    K, L = np.meshgrid(ks, ls, indexing="ij")
    vals = p.value_2d(K, L)
    vals[nx - 1, ny - 1] = 0.0
    if not np.all(np.isfinite(vals)):
        raise ValueError(f"potential {p.name!r} has a non-finite value at a grid offset")
    vals.setflags(write=False)
    return vals
