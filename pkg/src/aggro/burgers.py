"""Minmod finite-volume solver for u_t + f(u)_x = 0 with f(u) = +/-(u - u^2),
plus the primitive/difference maps between CDFs and cell densities.

The attractive kernel |x| corresponds to sign=+1, the repulsive -|x| to
sign=-1.  Cell averages u_i live on cells centered at the gridpoints of the
companion density grid, so rho_{i+1/2} = (u_{i+1} - u_i)/dx links the two
representations; ghost cells extrapolate flat, which matches ghost density 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import DiscreteMeasure1D, Grid1D

__all__ = ["BurgersState", "minmod_slopes", "burgers_step", "burgers_solve",
           "primitive", "difference", "write_u_csv"]


@dataclass(frozen=True)
class BurgersState:
    grid: Grid1D
    u: np.ndarray

    def __post_init__(self):
        u = np.ascontiguousarray(self.u, dtype=np.float64)
        if u.shape != (self.grid.n_cells + 1,):
            raise ValueError(
                f"u must have one value per gridpoint ({self.grid.n_cells + 1}), got {u.shape}"
            )
        if not np.all(np.isfinite(u)):
            raise ValueError("u contains non-finite entries")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)


def minmod_slopes(u: np.ndarray, dx: float) -> np.ndarray:
    """Sign-aware minmod slopes, zero at local extrema; for nondecreasing data
    this is min(u_i - u_{i-1}, u_{i+1} - u_i)/dx.  Ghost cells are flat."""
    du = np.diff(u)
    dl = np.concatenate([[0.0], du])
    dr = np.concatenate([du, [0.0]])
    same = dl * dr > 0.0
    mm = np.where(same, np.sign(dl) * np.minimum(np.abs(dl), np.abs(dr)), 0.0)
    return mm / dx


def _flux(f, a, b, c):
    return 0.5 * (f(a) + f(b)) - 0.5 * c * (b - a)


def burgers_step(state: BurgersState, dt: float, sign: float = 1.0,
                 c: float | None = None) -> BurgersState:
    """One forward-Euler step of the reconstructed Lax-Friedrichs-type scheme.

    `c` defaults to max_i |f'(u_i)|; pass a value to share the diffusion
    constant with the companion density scheme.  Requires dt*c/dx <= 1/2.
    """
    if sign not in (1.0, -1.0, 1, -1):
        raise ValueError("sign must be +1 or -1")
    grid = state.grid
    u = state.u
    dx = grid.dx

    def f(v):
        return sign * (v - v * v)

    if c is None:
        c = float(np.max(np.abs(1.0 - 2.0 * u)))
    if dt * c / dx > 0.5 * (1.0 + 1e-9):
        raise ValueError(f"CFL violation: dt*c/dx = {dt * c / dx:g} > 1/2")

    sigma = minmod_slopes(u, dx)
    half = 0.5 * dx * sigma
    # Interior edge states at x_{i+1/2}, i = 0..n-1, plus flat-ghost boundary
    # edges at x_{-1/2} and x_{n+1/2}.
    left = np.concatenate([[u[0]], u[:-1] + half[:-1], [u[-1] + half[-1]]])
    right = np.concatenate([[u[0] - half[0]], u[1:] - half[1:], [u[-1]]])
    F = _flux(f, left, right, c)
    unew = u - (dt / dx) * (F[1:] - F[:-1])
    return BurgersState(grid, unew)


def burgers_solve(state: BurgersState, t_end: float, sign: float = 1.0,
                  cfl: float = 0.4, method: str = "ssprk3") -> BurgersState:
    """Advance to t_end with per-step c = max|f'(u_i)| and SSP time stepping."""
    if method not in ("euler", "ssprk3"):
        raise ValueError("method must be 'euler' or 'ssprk3'")
    if not (0.0 < cfl < 0.5):
        raise ValueError("cfl must lie in (0, 1/2)")
    t = 0.0
    while t < t_end:
        c = float(np.max(np.abs(1.0 - 2.0 * state.u)))
        dt = cfl * state.grid.dx / max(c, 1e-8)
        if dt >= t_end - t:
            dt = t_end - t
            t = t_end
        else:
            t += dt
        if method == "euler":
            state = burgers_step(state, dt, sign, c)
        else:
            grid = state.grid
            s1 = burgers_step(state, dt, sign, c)
            s2 = BurgersState(grid, 0.75 * state.u + 0.25 * burgers_step(s1, dt, sign, c).u)
            state = BurgersState(grid, (state.u + 2.0 * burgers_step(s2, dt, sign, c).u) / 3.0)
    return state


def primitive(m: DiscreteMeasure1D) -> BurgersState:
    """Prefix sums u_i = sum_{j < i} dx * rho_{j+1/2}; u_0 = 0."""
    u = np.zeros(m.grid.n_cells + 1)
    u[1:] = np.cumsum(m.grid.dx * m.density)
    return BurgersState(m.grid, u)


def difference(state: BurgersState) -> DiscreteMeasure1D:
    """rho_{i+1/2} = (u_{i+1} - u_i)/dx; u must be nondecreasing.

    Dips below zero within one part in 1e-12 of max|u| are roundoff from the
    scheme and are snapped to zero; anything larger is an error.
    """
    du = np.diff(state.u)
    tol = 1e-12 * max(1e-300, float(np.max(np.abs(state.u))))
    if np.any(du < -tol):
        raise ValueError("u is decreasing; difference() needs a nondecreasing CDF")
    return DiscreteMeasure1D(state.grid, np.maximum(du, 0.0) / state.grid.dx)


def write_u_csv(state: BurgersState, path) -> None:
    with open(path, "w") as fh:
        fh.write("x,u\n")
        for x, v in zip(state.grid.gridpoints(), state.u):
            fh.write(f"{x:.17g},{v:.17g}\n")
