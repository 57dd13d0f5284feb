"""Second-order scheme on 2D Cartesian grids.

Vertex densities rho_{i+1/2,j+1/2} are reconstructed with corner-min cell
slopes sigma_{i,j} and residual atoms; the four one-sided fields
rho^{E,W,N,S} are region masses of the reconstructed measure divided by
dx*dy, so the local conservation identity
(rho^E_{i,j+1/2} + rho^W_{i+1,j+1/2} + rho^N_{i+1/2,j} + rho^S_{i+1/2,j+1})/4
= rho_{i+1/2,j+1/2} holds verbatim and the construction reduces to the 1D
convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fftconv import FFTConv2D, dense_conv_2d
from .measures import DiscreteMeasure2D, Grid2D
from .potentials import Potential, kernel_tables_2d
from .scheme1d import ADAPTIVE_SPEED_FLOOR, FluxConfig

__all__ = [
    "Reconstruction2D",
    "reconstruct_2d",
    "velocities_2d",
    "spatial_operator_2d",
    "spatial_operator_2d_diagnostics",
    "max_dt_2d",
    "make_operator_2d",
    "FAST_CONV_THRESHOLD",
]

# Dense quadruple loops are the reference semantics; FFT convolution is the
# production path once a grid reaches this many cells per axis.
FAST_CONV_THRESHOLD = 128


@dataclass(frozen=True)
class Reconstruction2D:
    grid: Grid2D
    sigma: np.ndarray       # (nx+1, ny+1) per cell C_{i,j}
    rho_tilde: np.ndarray   # (nx, ny)     per vertex
    east: np.ndarray        # (nx+1, ny)
    west: np.ndarray        # (nx+1, ny)
    north: np.ndarray       # (nx, ny+1)
    south: np.ndarray       # (nx, ny+1)


def reconstruct_2d(m: DiscreteMeasure2D, order: str = "second") -> Reconstruction2D:
    d = m.density
    nx, ny = d.shape
    if order == "second":
        dp = np.zeros((nx + 2, ny + 2))
        dp[1:-1, 1:-1] = d
        sigma = np.minimum(
            np.minimum(dp[:-1, :-1], dp[1:, :-1]),
            np.minimum(dp[:-1, 1:], dp[1:, 1:]),
        )
    elif order == "first":
        sigma = np.zeros((nx + 1, ny + 1))
    else:
        raise ValueError("order must be 'first' or 'second'")

    corner_avg = 0.25 * (sigma[:-1, :-1] + sigma[1:, :-1] + sigma[:-1, 1:] + sigma[1:, 1:])
    # Exact value is >= 0; guard the last-ulp cancellation.
    rho_tilde = np.maximum(d - corner_avg, 0.0)

    half_col = 0.5 * (sigma[:, :-1] + sigma[:, 1:])   # (nx+1, ny): cells i, rows j and j+1
    half_row = 0.5 * (sigma[:-1, :] + sigma[1:, :])   # (nx, ny+1)

    tpx = np.vstack([rho_tilde, np.zeros((1, ny))])       # ghost vertex column at i = nx
    tmx = np.vstack([np.zeros((1, ny)), rho_tilde])       # ghost at i = -1
    east = tpx + half_col
    west = tmx + half_col

    tpy = np.hstack([rho_tilde, np.zeros((nx, 1))])
    tmy = np.hstack([np.zeros((nx, 1)), rho_tilde])
    north = tpy + half_row
    south = tmy + half_row
    return Reconstruction2D(m.grid, sigma, rho_tilde, east, west, north, south)


class ConvPlans2D:
    """Precomputed kernel tables (and FFT plans) for one grid + potential."""

    def __init__(self, potential: Potential, grid: Grid2D, mode: str = "auto"):
        if mode not in ("auto", "dense", "fft"):
            raise ValueError("mode must be 'auto', 'dense' or 'fft'")
        tx, ty = kernel_tables_2d(potential, grid)
        nx, ny = grid.nx, grid.ny
        # E/W stations are (nx+1, ny); N/S stations are (nx, ny+1).
        self.table_ew = np.ascontiguousarray(tx[:, 1:-1])
        self.table_ns = np.ascontiguousarray(ty[1:-1, :])
        use_fft = mode == "fft" or (mode == "auto" and min(nx, ny) >= FAST_CONV_THRESHOLD)
        if use_fft:
            self.conv_ew = FFTConv2D(self.table_ew, (nx + 1, ny))
            self.conv_ns = FFTConv2D(self.table_ns, (nx, ny + 1))
        else:
            self.conv_ew = None
            self.conv_ns = None

    def apply_ew(self, field: np.ndarray) -> np.ndarray:
        if self.conv_ew is not None:
            return self.conv_ew(field)
        return dense_conv_2d(self.table_ew, field)

    def apply_ns(self, field: np.ndarray) -> np.ndarray:
        if self.conv_ns is not None:
            return self.conv_ns(field)
        return dense_conv_2d(self.table_ns, field)


def velocities_2d(rec: Reconstruction2D, plans: ConvPlans2D):
    """The four velocity fields (aE, aW, aN, aS); dense quadruple loop is the
    reference semantics, FFT plans must agree to 1e-12 per entry."""
    w = rec.grid.cell_area
    a_e = w * plans.apply_ew(rec.east)
    a_w = w * plans.apply_ew(rec.west)
    a_n = w * plans.apply_ns(rec.north)
    a_s = w * plans.apply_ns(rec.south)
    return a_e, a_w, a_n, a_s


def _assemble_2d(m: DiscreteMeasure2D, potential: Potential, config: FluxConfig,
                 plans: ConvPlans2D | None = None):
    grid = m.grid
    if plans is None:
        plans = ConvPlans2D(potential, grid)
    rec = reconstruct_2d(m, config.order)
    a_e, a_w, a_n, a_s = velocities_2d(rec, plans)
    max_a = max(float(np.max(np.abs(a_e))), float(np.max(np.abs(a_w))),
                float(np.max(np.abs(a_n))), float(np.max(np.abs(a_s))))
    if config.c_mode == "adaptive":
        c = max_a
    else:
        c = potential.lipschitz_on(grid.diameter)
        if not np.isfinite(c):
            raise ValueError(
                f"potential {potential.name!r} has an infinite Lipschitz constant on "
                "this domain; run with c_mode='adaptive'"
            )
    if config.flux_kind == "lax_friedrichs":
        jx = 0.5 * ((a_e + c) * rec.east) + 0.5 * ((a_w - c) * rec.west)
        jy = 0.5 * ((a_n + c) * rec.north) + 0.5 * ((a_s - c) * rec.south)
    else:
        jx = np.maximum(a_e, 0.0) * rec.east + np.minimum(a_w, 0.0) * rec.west
        jy = np.maximum(a_n, 0.0) * rec.north + np.minimum(a_s, 0.0) * rec.south
    # Closed box, as in 1D.
    jx[0, :] = 0.0
    jx[-1, :] = 0.0
    jy[:, 0] = 0.0
    jy[:, -1] = 0.0
    deriv = (jx[1:, :] - jx[:-1, :]) / grid.dx + (jy[:, 1:] - jy[:, :-1]) / grid.dy
    return deriv, c, max_a


def spatial_operator_2d(m: DiscreteMeasure2D, potential: Potential, config: FluxConfig,
                        plans: ConvPlans2D | None = None) -> np.ndarray:
    """Semi-discrete right-hand side on the vertex densities."""
    return _assemble_2d(m, potential, config, plans=plans)[0]


def spatial_operator_2d_diagnostics(m, potential, config, plans=None):
    return _assemble_2d(m, potential, config, plans=plans)


def max_dt_2d(potential: Potential, grid: Grid2D, config: FluxConfig,
              state: DiscreteMeasure2D | None = None,
              plans: ConvPlans2D | None = None) -> float:
    """lipschitz mode: cfl * min(dx, dy) / ||W||_Lip with cfl < 1/4 enforced;
    adaptive mode uses c^n = max over the four velocity fields."""
    if not (config.cfl_number < 0.25):
        raise ValueError("the 2D CFL condition requires cfl_number < 1/4")
    h = min(grid.dx, grid.dy)
    if config.c_mode == "lipschitz":
        lip = potential.lipschitz_on(grid.diameter)
        if not np.isfinite(lip):
            raise ValueError(
                f"potential {potential.name!r} has an infinite Lipschitz constant on "
                "this domain; run with c_mode='adaptive'"
            )
        return config.cfl_number * h / lip
    if state is None:
        raise ValueError("adaptive c_mode needs the current state to size the timestep")
    _, _, max_a = _assemble_2d(state, potential, config, plans=plans)
    return config.cfl_number * h / max(max_a, ADAPTIVE_SPEED_FLOOR)


def make_operator_2d(potential: Potential, grid: Grid2D, config: FluxConfig,
                     conv_mode: str = "auto"):
    """Bind potential/grid/config into (operator, dt_policy); kernel tables
    and FFT plans are precomputed once."""
    plans = ConvPlans2D(potential, grid, mode=conv_mode)

    def operator(m: DiscreteMeasure2D) -> np.ndarray:
        return spatial_operator_2d(m, potential, config, plans=plans)

    if config.c_mode == "lipschitz":
        dt0 = max_dt_2d(potential, grid, config)

        def dt_policy(_m: DiscreteMeasure2D) -> float:
            return dt0
    else:
        def dt_policy(m: DiscreteMeasure2D) -> float:
            return max_dt_2d(potential, grid, config, state=m, plans=plans)

    return operator, dt_policy
