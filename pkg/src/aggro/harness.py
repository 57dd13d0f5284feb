"""Experiment catalogue: configs, initial data, reference solutions,
convergence studies, steady-state distances and artifact emission.

Everything here is deterministic: rerunning a config reproduces its CSV/JSON
outputs byte for byte.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import burgers as _burgers
from . import metrics as _metrics
from . import scheme1d as _s1
from . import scheme2d as _s2
from . import timeint as _ti
from .measures import (AtomList, DiscreteMeasure1D, DiscreteMeasure2D, Grid1D,
                       Grid2D, moments, moments_2d, project_atoms,
                       project_atoms_2d, project_density, project_density_2d,
                       write_csv)
from .potentials import Potential, make_potential

__all__ = [
    "ExperimentConfig",
    "RunResult",
    "ConvergenceRow",
    "run_experiment",
    "convergence_study",
    "steady_state_distance",
    "particle_oracle",
    "block_aggregate_1d",
    "block_aggregate_2d",
    "observed_orders",
    "log_log_slope",
    "build_grid",
    "build_initial",
    "build_steady_reference",
    "boundary_guard",
    "initial_mass_raw",
]

BOUNDARY_MASS_LIMIT = 1e-8
TRANSPORT_CAP_STUDY = 120_000


# ----------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------

_DEFAULT_CFL = {1: 0.4, 2: 0.2}
_DEFAULT_INTEGRATOR = {1: "ssprk3", 2: "heun"}


@dataclass
class ExperimentConfig:
    dimension: int
    domain: tuple
    n_cells: int
    potential: dict
    initial: dict
    flux_kind: str = "lax_friedrichs"
    order: str = "second"
    integrator: str | None = None
    cfl_number: float | None = None
    c_mode: str = "lipschitz"
    t_end: float | None = None
    t_end_mass_scale: float | None = None
    snapshot_times: tuple = ()
    reference: dict | None = None
    fast_convolution: bool = False
    record_energy: bool = False
    output_dir: str | None = None

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if self.dimension == 1:
            lo, hi = self.domain
            if not hi > lo:
                raise ValueError("domain must satisfy hi > lo")
            self.domain = (float(lo), float(hi))
        else:
            (xlo, xhi), (ylo, yhi) = self.domain
            if not (xhi > xlo and yhi > ylo):
                raise ValueError("domain must satisfy hi > lo on both axes")
            self.domain = ((float(xlo), float(xhi)), (float(ylo), float(yhi)))
        if self.n_cells < 4:
            raise ValueError("n_cells must be >= 4")
        if self.cfl_number is None:
            self.cfl_number = _DEFAULT_CFL[self.dimension]
        if self.integrator is None:
            self.integrator = _DEFAULT_INTEGRATOR[self.dimension]
        if (self.t_end is None) == (self.t_end_mass_scale is None):
            raise ValueError("set exactly one of t_end and t_end_mass_scale")
        self.snapshot_times = tuple(float(t) for t in self.snapshot_times)
        if "name" not in self.potential:
            raise ValueError("potential needs a 'name'")
        if "name" not in self.initial:
            raise ValueError("initial needs a 'name'")

    # -- JSON mirror ----------------------------------------------------
    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            data = json.load(fh)
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known - {"schemes"}
        if extra:
            raise ValueError(f"unknown config fields: {sorted(extra)}")
        kwargs = {k: v for k, v in data.items() if k in known}
        if "domain" in kwargs:
            dom = kwargs["domain"]
            if kwargs.get("dimension") == 2:
                kwargs["domain"] = (tuple(dom[0]), tuple(dom[1]))
            else:
                kwargs["domain"] = tuple(dom)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            val = getattr(self, name)
            if isinstance(val, tuple):
                val = [list(v) if isinstance(v, tuple) else v for v in val]
            out[name] = val
        return out

    def flux_config(self) -> _s1.FluxConfig:
        return _s1.FluxConfig(self.flux_kind, self.order, self.c_mode, self.cfl_number)


def build_grid(cfg: ExperimentConfig, n_cells: int | None = None):
    n = cfg.n_cells if n_cells is None else n_cells
    if cfg.dimension == 1:
        lo, hi = cfg.domain
        return Grid1D(lo, (hi - lo) / n, n)
    (xlo, xhi), (ylo, yhi) = cfg.domain
    return Grid2D(xlo, ylo, (xhi - xlo) / n, (yhi - ylo) / n, n, n)


# ----------------------------------------------------------------------
# Initial conditions
# ----------------------------------------------------------------------

def _gaussian36(x):
    return np.exp(-36.0 * x * x) / math.sqrt(math.pi)


def _cosine_bump(x):
    inside = np.abs(x) <= 0.3
    return np.where(inside, (math.pi / 1.2) * np.cos((math.pi / 0.6) * np.clip(x, -0.3, 0.3)), 0.0)


def _blob(x0, y0, c):
    def f(X, Y):
        return np.exp(-c * ((X - x0) ** 2 + (Y - y0) ** 2))
    return f


def _three_blobs(X, Y):
    return (_blob(0.25, 1.0 / 3.0, 100.0)(X, Y)
            + _blob(0.8, 0.7, 100.0)(X, Y)
            + 0.9 * _blob(0.4, 0.6, 100.0)(X, Y))


def initial_profile(cfg: ExperimentConfig):
    """Resolve the configured initial condition to ('density', f) or
    ('atoms', AtomList)."""
    name = cfg.initial["name"]
    params = cfg.initial.get("params", {})
    if cfg.dimension == 1:
        if name == "gaussian36":
            return "density", _gaussian36
        if name == "cosine_bump":
            return "density", _cosine_bump
        if name == "uniform":
            lo = float(params.get("lo", 0.0))
            hi = float(params.get("hi", 1.0))
            h = 1.0 / (hi - lo)
            return "density", lambda x: np.where((x >= lo) & (x <= hi), h, 0.0)
        if name == "two_dirac":
            return "atoms", AtomList(np.array([-0.5, 0.5]), np.array([0.5, 0.5]))
        if name == "dlv_pair":
            return "atoms", AtomList(np.array([-0.25, 0.25]), np.array([0.5, 0.5]))
        raise ValueError(f"unknown 1D initial condition {name!r}")
    if name == "blob":
        x0 = float(params.get("x0", 1.0))
        y0 = float(params.get("y0", 1.0))
        c = float(params.get("C", 10.0))
        return "density", _blob(x0, y0, c)
    if name == "table5_blob":
        return "density", _blob(1.0, 1.0, 36.0)
    if name == "three_blobs":
        return "density", _three_blobs
    raise ValueError(f"unknown 2D initial condition {name!r}")


def build_initial(cfg: ExperimentConfig, grid):
    kind, payload = initial_profile(cfg)
    normalize = bool(cfg.initial.get("normalize", True))
    if cfg.dimension == 1:
        if kind == "density":
            return project_density(payload, grid, normalize=normalize)
        return project_atoms(payload, grid, normalize=normalize)
    if kind == "density":
        return project_density_2d(payload, grid, normalize=normalize)
    return project_atoms_2d(payload, grid, normalize=normalize)


def initial_mass_raw(cfg: ExperimentConfig, grid) -> float:
    """Projected mass before normalization (the paper-style normalization
    constant M for blob data)."""
    kind, payload = initial_profile(cfg)
    if cfg.dimension == 1:
        m = project_density(payload, grid) if kind == "density" else project_atoms(payload, grid)
    else:
        m = project_density_2d(payload, grid) if kind == "density" else project_atoms_2d(payload, grid)
    return m.total_mass


def resolve_t_end(cfg: ExperimentConfig, grid) -> float:
    if cfg.t_end is not None:
        return float(cfg.t_end)
    return float(cfg.t_end_mass_scale) * initial_mass_raw(cfg, grid)


# ----------------------------------------------------------------------
# Guards and operators
# ----------------------------------------------------------------------

def boundary_guard(m, limit: float = BOUNDARY_MASS_LIMIT) -> None:
    """Abort when mass within two cells of the boundary exceeds `limit`:
    the scheme assumes compact support away from the walls."""
    if isinstance(m, DiscreteMeasure1D):
        d = m.density
        edge = m.grid.dx * float(d[0] + d[1] + d[-2] + d[-1])
    else:
        d = m.density
        inner = float(np.sum(d[2:-2, 2:-2]))
        edge = m.grid.cell_area * (float(np.sum(d)) - inner)
    if edge > limit:
        raise RuntimeError(
            f"support reached the domain boundary (edge mass {edge:.3e} > {limit:g}); "
            "enlarge the domain"
        )


def _build_machinery(cfg: ExperimentConfig, grid, fast: bool | None = None):
    pot = make_potential(cfg.potential["name"], cfg.potential.get("params"))
    fluxcfg = cfg.flux_config()
    if cfg.dimension == 1:
        use_fast = cfg.fast_convolution if fast is None else fast
        operator, dt_policy = _s1.make_operator(pot, grid, fluxcfg, fast_convolution=use_fast)
        diag = lambda m: _s1.spatial_operator_diagnostics(m, pot, fluxcfg)
    else:
        mode = "auto" if fast is None and not cfg.fast_convolution else (
            "fft" if (fast or cfg.fast_convolution) else "auto")
        plans = _s2.ConvPlans2D(pot, grid, mode=mode)
        operator = lambda m: _s2.spatial_operator_2d(m, pot, fluxcfg, plans=plans)
        if fluxcfg.c_mode == "lipschitz":
            dt0 = _s2.max_dt_2d(pot, grid, fluxcfg)
            dt_policy = lambda _m: dt0
        else:
            dt_policy = lambda m: _s2.max_dt_2d(pot, grid, fluxcfg, state=m, plans=plans)
        diag = lambda m: _s2.spatial_operator_2d_diagnostics(m, pot, fluxcfg, plans=plans)
    integ = _ti.make_integrator(cfg.integrator, operator, dt_policy)
    return pot, fluxcfg, integ, diag


# ----------------------------------------------------------------------
# Running experiments
# ----------------------------------------------------------------------

@dataclass
class RunResult:
    config: ExperimentConfig
    grid: object
    initial: object
    final: object
    snapshots: list
    summary: dict
    energy_report: _metrics.EnergyReport | None = None


def _measure_moments(m):
    if isinstance(m, DiscreteMeasure1D):
        mom = moments(m)
        return mom.mass, (mom.center_of_mass,)
    mom = moments_2d(m)
    return mom.mass, mom.center_of_mass


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    """Run one experiment with full diagnostics and optional artifacts."""
    t_start = time.perf_counter()
    grid = build_grid(cfg)
    m0 = build_initial(cfg, grid)
    t_end = resolve_t_end(cfg, grid)
    pot, fluxcfg, integ, diag = _build_machinery(cfg, grid)

    mass0, com0 = _measure_moments(m0)
    max_abs_a = diag(m0)[2]
    energy_eval = None
    energy_ts: list[float] = []
    energy_es: list[float] = []
    if cfg.record_energy:
        energy_eval = _metrics.make_energy_evaluator(pot, grid)
        energy_ts.append(0.0)
        energy_es.append(energy_eval(m0))

    def on_step(t, state):
        nonlocal max_abs_a
        boundary_guard(state)
        max_abs_a = max(max_abs_a, diag(state)[2])
        if energy_eval is not None:
            energy_ts.append(t)
            energy_es.append(energy_eval(state))

    result = _ti.integrate(integ, m0, t_end, snapshot_times=cfg.snapshot_times,
                           on_step=on_step)
    massf, comf = _measure_moments(result.final_state)

    report = None
    khat = None
    max_inc = None
    if energy_eval is not None:
        report = _metrics.EnergyReport(np.array(energy_ts), np.array(energy_es))
        h = grid.dx if cfg.dimension == 1 else min(grid.dx, grid.dy)
        dt_nominal = integ.dt_max(m0)
        max_inc, khat = _metrics.dissipation_check(report, h, dt_nominal)

    summary = {
        "t_end": t_end,
        "n_steps": result.n_steps,
        "mass_initial": mass0,
        "mass_final": massf,
        "mass_drift_rel": abs(massf - mass0) / mass0 if mass0 else 0.0,
        "com_initial": list(com0),
        "com_final": list(comf),
        "com_drift": max(abs(cf - c0) for cf, c0 in zip(comf, com0)),
        "max_abs_velocity": max_abs_a,
        "max_energy_increment": max_inc,
        "khat": khat,
        "runtime_seconds": time.perf_counter() - t_start,
    }
    run = RunResult(cfg, grid, m0, result.final_state, result.snapshots, summary, report)
    if cfg.output_dir:
        write_artifacts(run)
    return run


def write_artifacts(run: RunResult) -> None:
    out = Path(run.config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(run.initial, out / "initial.csv")
    write_csv(run.final, out / "final.csv")
    for k, (t, snap) in enumerate(run.snapshots):
        write_csv(snap, out / f"snapshot_{k:03d}.csv")
    if run.energy_report is not None:
        _metrics.write_energy_csv(run.energy_report, out / "energy.csv")
    summary = dict(run.summary)
    summary["snapshot_times"] = [t for t, _ in run.snapshots]
    # repr-level floats keep reruns byte-identical
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_lean(cfg: ExperimentConfig, n_cells: int | None = None,
             t_end: float | None = None, fast: bool | None = None):
    """Run without per-step diagnostics (used by the studies); the boundary
    guard stays on."""
    grid = build_grid(cfg, n_cells)
    m0 = build_initial(cfg, grid)
    te = resolve_t_end(cfg, grid) if t_end is None else t_end
    _, _, integ, _ = _build_machinery(cfg, grid, fast=fast)
    result = _ti.integrate(integ, m0, te, on_step=lambda _t, s: boundary_guard(s))
    return result.final_state


# ----------------------------------------------------------------------
# Particle oracle
# ----------------------------------------------------------------------

def _pair_velocities(positions, masses, pot: Potential, dim: int):
    if dim == 1:
        diff = positions[:, None] - positions[None, :]
        g = pot.grad_1d(diff)
        return -(g @ masses)
    dx = positions[:, None, 0] - positions[None, :, 0]
    dy = positions[:, None, 1] - positions[None, :, 1]
    gx, gy = pot.grad_2d(dx, dy)
    return -np.stack([gx @ masses, gy @ masses], axis=1)


def particle_oracle(atoms: AtomList, potential: Potential, t_end: float,
                    rel_step: float = 1e-5, merge_tol: float = 1e-9) -> AtomList:
    """Exact atomic dynamics dX_k/dt = -sum_{l != k} m_l grad W(X_k - X_l),
    integrated with fixed-step RK4 (step = rel_step * t_end); atoms closer
    than merge_tol merge mass-weightedly."""
    if t_end < 0.0:
        raise ValueError("t_end must be >= 0")
    pos = np.array(atoms.positions, dtype=np.float64)
    if atoms.dim == 1:
        pos = pos.reshape(-1)
    mass = np.array(atoms.masses, dtype=np.float64)
    dim = atoms.dim
    if t_end == 0.0 or pos.shape[0] == 0:
        return AtomList(pos, mass)
    h = rel_step * t_end
    n_steps = int(round(1.0 / rel_step))

    # straightforward RK4 on the positions
    for _ in range(n_steps):
        if dim == 1:
            k1 = _vel_1d(pos, mass, potential)
            k2 = _vel_1d(pos + 0.5 * h * k1, mass, potential)
            k3 = _vel_1d(pos + 0.5 * h * k2, mass, potential)
            k4 = _vel_1d(pos + h * k3, mass, potential)
        else:
            k1 = _pair_velocities(pos, mass, potential, 2)
            k2 = _pair_velocities(pos + 0.5 * h * k1, mass, potential, 2)
            k3 = _pair_velocities(pos + 0.5 * h * k2, mass, potential, 2)
            k4 = _pair_velocities(pos + h * k3, mass, potential, 2)
        pos = pos + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(pos)):
            raise RuntimeError("particle oracle produced non-finite positions")
        pos, mass = _merge_atoms(pos, mass, dim, merge_tol)
    return AtomList(pos, mass)


def _vel_1d(pos, mass, pot: Potential):
    diff = pos[:, None] - pos[None, :]
    return -(pot.grad_1d(diff) @ mass)


def _merge_atoms(pos, mass, dim, tol):
    n = mass.shape[0]
    if n < 2:
        return pos, mass
    used = np.zeros(n, dtype=bool)
    out_pos = []
    out_mass = []
    for k in range(n):
        if used[k]:
            continue
        pk = pos[k]
        mk = mass[k]
        acc_pos = pk * mk
        acc_mass = mk
        for l in range(k + 1, n):
            if used[l]:
                continue
            dist = abs(pos[l] - pk) if dim == 1 else math.hypot(*(pos[l] - pk))
            if dist < tol:
                used[l] = True
                acc_pos = acc_pos + pos[l] * mass[l]
                acc_mass += mass[l]
        out_pos.append(acc_pos / acc_mass if acc_mass > 0 else pk)
        out_mass.append(acc_mass)
    if len(out_mass) == n:
        return pos, mass
    return np.array(out_pos), np.array(out_mass)


# ----------------------------------------------------------------------
# References and studies
# ----------------------------------------------------------------------

def block_aggregate_1d(fine: DiscreteMeasure1D, coarse_grid: Grid1D) -> DiscreteMeasure1D:
    """Exact block mass sums from a nested fine grid onto a coarse one."""
    nf, nc = fine.grid.n_cells, coarse_grid.n_cells
    if nf % nc != 0:
        raise ValueError("fine grid must be a refinement of the coarse grid")
    lo_f, hi_f = fine.grid.span
    lo_c, hi_c = coarse_grid.span
    if not (math.isclose(lo_f, lo_c, rel_tol=0, abs_tol=1e-12)
            and math.isclose(hi_f, hi_c, rel_tol=0, abs_tol=1e-12)):
        raise ValueError("grids must share the same span")
    f = nf // nc
    coarse_density = fine.density.reshape(nc, f).sum(axis=1) / f
    return DiscreteMeasure1D(coarse_grid, coarse_density)


def block_aggregate_2d(fine: DiscreteMeasure2D, coarse_grid: Grid2D) -> DiscreteMeasure2D:
    nfx, nfy = fine.grid.nx, fine.grid.ny
    ncx, ncy = coarse_grid.nx, coarse_grid.ny
    if nfx % ncx != 0 or nfy % ncy != 0:
        raise ValueError("fine grid must be a refinement of the coarse grid")
    fx, fy = nfx // ncx, nfy // ncy
    coarse = fine.density.reshape(ncx, fx, ncy, fy).sum(axis=(1, 3)) / (fx * fy)
    return DiscreteMeasure2D(coarse_grid, coarse)


def _burgers_sign(cfg: ExperimentConfig) -> float:
    name = cfg.potential["name"]
    if name == "abs":
        return 1.0
    if name == "neg_abs":
        return -1.0
    raise ValueError("burgers_fine reference exists only for the |x| potentials")


def burgers_fine_reference(cfg: ExperimentConfig, t_end: float,
                           level: int = 15) -> DiscreteMeasure1D:
    """Solve the dual conservation law on 2^level cells with the minmod
    scheme and SSP-RK3, then map back to a density."""
    if cfg.dimension != 1:
        raise ValueError("burgers_fine is a 1D reference")
    sign = _burgers_sign(cfg)
    fine_grid = build_grid(cfg, 2 ** level)
    m0 = build_initial(cfg, fine_grid)
    u0 = _burgers.primitive(m0)
    uT = _burgers.burgers_solve(u0, t_end, sign=sign, cfl=min(cfg.cfl_number, 0.45))
    return _burgers.difference(uT)


def self_fine_reference(cfg: ExperimentConfig, t_end: float, level: int):
    """Run the configured scheme itself on a 2^level grid."""
    return run_lean(cfg, n_cells=2 ** level, t_end=t_end, fast=True)


def reference_measure(cfg: ExperimentConfig, t_end: float):
    """Resolve cfg.reference to ('grid', fine_measure), ('atoms', AtomList)
    or ('steady', name)."""
    ref = cfg.reference or {}
    kind = ref.get("kind")
    if kind == "burgers_fine":
        return "grid", burgers_fine_reference(cfg, t_end, int(ref.get("level", 15)))
    if kind == "self_fine":
        return "grid", self_fine_reference(cfg, t_end, int(ref.get("level", 13)))
    if kind == "particle_oracle":
        k, payload = initial_profile(cfg)
        if k != "atoms":
            raise ValueError("particle_oracle reference needs atomic initial data")
        pot = make_potential(cfg.potential["name"], cfg.potential.get("params"))
        atoms = payload
        if bool(cfg.initial.get("normalize", True)):
            atoms = atoms.normalized()
        return "atoms", particle_oracle(atoms, pot, t_end)
    if kind == "exact_steady":
        return "steady", ref["name"]
    raise ValueError(f"unknown reference kind {kind!r}")


def reference_on_grid(cfg, ref_kind, ref_payload, grid, run_measure):
    if ref_kind == "grid":
        if cfg.dimension == 1:
            return block_aggregate_1d(ref_payload, grid)
        return block_aggregate_2d(ref_payload, grid)
    if ref_kind == "atoms":
        if cfg.dimension == 1:
            return project_atoms(ref_payload, grid)
        return project_atoms_2d(ref_payload, grid)
    # steady-state references are centered at the run's conserved center of mass
    if cfg.dimension == 1:
        mass, com = _measure_moments(run_measure)
        return build_steady_reference(ref_payload, grid, com[0], mass)
    mass, com = _measure_moments(run_measure)
    return build_steady_reference(ref_payload, grid, com, mass)


def distance_to(cfg: ExperimentConfig, a, b) -> float:
    if cfg.dimension == 1:
        return _metrics.d1_1d(a, b)
    return _metrics.d1_2d(a, b, cap=TRANSPORT_CAP_STUDY)


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    d1: float
    ooc: float | None


def observed_orders(ns, errors) -> list[ConvergenceRow]:
    rows = []
    for k, (n, e) in enumerate(zip(ns, errors)):
        ooc = None if k == 0 else math.log2(errors[k - 1] / e)
        rows.append(ConvergenceRow(int(n), float(e), ooc))
    return rows


def log_log_slope(hs, errors) -> float:
    """Least-squares slope of log(error) against log(h)."""
    x = np.log(np.asarray(hs, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    x = x - x.mean()
    return float(np.sum(x * (y - y.mean())) / np.sum(x * x))


def convergence_study(cfg: ExperimentConfig, levels: int) -> list[ConvergenceRow]:
    """Doubling ladder starting at cfg.n_cells; d1 against the configured
    reference, aggregated/projected onto each run grid."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    ns = [cfg.n_cells * 2 ** k for k in range(levels)]
    base_grid = build_grid(cfg)
    t_end = resolve_t_end(cfg, base_grid)
    ref_kind, ref_payload = reference_measure(cfg, t_end)
    if ref_kind == "grid":
        fine_n = ref_payload.grid.n_cells if cfg.dimension == 1 else ref_payload.grid.nx
        for n in ns:
            if fine_n % n != 0 or fine_n <= ns[-1]:
                raise ValueError(
                    f"reference grid ({fine_n}) must strictly refine every level in {ns}"
                )
    errors = []
    for n in ns:
        final = run_lean(cfg, n_cells=n, t_end=t_end)
        ref = reference_on_grid(cfg, ref_kind, ref_payload, final.grid, final)
        errors.append(distance_to(cfg, final, ref))
    return observed_orders(ns, errors)


def steady_state_distance(cfg: ExperimentConfig) -> dict:
    """Run to t_end and measure d1 to the named exact steady state."""
    ref = cfg.reference or {}
    if ref.get("kind") != "exact_steady":
        raise ValueError("steady_state_distance needs reference.kind == 'exact_steady'")
    grid = build_grid(cfg)
    t_end = resolve_t_end(cfg, grid)
    final = run_lean(cfg, t_end=t_end)
    target = reference_on_grid(cfg, "steady", ref["name"], grid, final)
    d1 = distance_to(cfg, final, target)
    return {"n": cfg.n_cells, "t_end": t_end, "steady_state": ref["name"], "d1": d1}


# ----------------------------------------------------------------------
# Exact steady-state profiles
# ----------------------------------------------------------------------

def _cell_overlap_integrals(grid: Grid1D, lo: float, hi: float, antideriv):
    """Per-cell integrals of a function supported on [lo, hi] whose
    antiderivative is given."""
    g = grid.gridpoints()
    a = np.clip(g[:-1], lo, hi)
    b = np.clip(g[1:], lo, hi)
    return antideriv(b) - antideriv(a)


def build_steady_reference(name: str, grid, com, mass: float):
    """Project a named exact steady profile (normalized to `mass`, centered
    at `com`) onto the run grid."""
    if isinstance(grid, Grid1D):
        if name == "half_indicator":
            vals = _cell_overlap_integrals(grid, com - 1.0, com + 1.0,
                                           lambda x: 0.5 * mass * x)
            return DiscreteMeasure1D(grid, vals / grid.dx)
        if name == "two_dirac_cooling":
            atoms = AtomList(np.array([com - 0.5, com + 0.5]),
                             np.array([0.5 * mass, 0.5 * mass]))
            return project_atoms(atoms, grid)
        if name == "halfcircle":
            scale = 2.0 * mass / math.pi

            def antideriv(x):
                u = np.clip(x - com, -1.0, 1.0)
                return scale * 0.5 * (u * np.sqrt(np.maximum(1.0 - u * u, 0.0)) + np.arcsin(u))

            vals = _cell_overlap_integrals(grid, com - 1.0, com + 1.0, antideriv)
            return DiscreteMeasure1D(grid, vals / grid.dx)
        raise ValueError(f"unknown 1D steady state {name!r}")

    cx, cy = com
    if name == "delta_ring":
        radius = math.sqrt(3.0) / 3.0
        npts = 8192
        theta = (np.arange(npts) + 0.5) * (2.0 * math.pi / npts)
        pos = np.column_stack([cx + radius * np.cos(theta), cy + radius * np.sin(theta)])
        return project_atoms_2d(AtomList(pos, np.full(npts, mass / npts)), grid)
    if name == "unit_disk":
        # Cell-area fractions by 16x16 midpoint subsampling of straddling cells.
        sub = 16
        xm, ym = grid.midpoints()
        off = (np.arange(sub) + 0.5) / sub - 0.5
        Xs = xm[:, None] + grid.dx * off[None, :]
        Ys = ym[:, None] + grid.dy * off[None, :]
        R2 = ((Xs[:, None, :, None] - cx) ** 2 + (Ys[None, :, None, :] - cy) ** 2)
        frac = np.mean(R2 <= 1.0, axis=(2, 3))
        density = (mass / math.pi) * frac
        return DiscreteMeasure2D(grid, density)
    raise ValueError(f"unknown 2D steady state {name!r}")
