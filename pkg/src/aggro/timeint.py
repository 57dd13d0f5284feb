"""Method-of-lines integrators over the semi-discrete spatial operators.

Heun and SSP-RK3 are convex combinations of forward-Euler substeps, so every
stability property the Euler step has at a given dt (positivity, mass and
center-of-mass conservation, the speed bound) carries over unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = ["Integrator", "make_integrator", "IntegrationResult", "integrate"]

_KINDS = ("euler", "heun", "ssprk3")


@dataclass(frozen=True)
class Integrator:
    """kind in {euler, heun, ssprk3}; `operator` maps a measure to the time
    derivative of its density array, `dt_max` gives the CFL-stable step."""

    kind: str
    operator: Callable
    dt_max: Callable

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"integrator kind must be one of {_KINDS}")

    def step(self, state, dt: float):
        """One full step.  Raises when dt exceeds the CFL limit."""
        limit = self.dt_max(state)
        if dt > limit * (1.0 + 1e-9):
            raise ValueError(f"dt = {dt:g} violates the CFL limit {limit:g}")
        cls = type(state)
        grid = state.grid
        L = self.operator
        y0 = state.density
        if self.kind == "euler":
            y = y0 + dt * L(state)
        elif self.kind == "heun":
            s1 = cls(grid, y0 + dt * L(state))
            y = 0.5 * y0 + 0.5 * (s1.density + dt * L(s1))
        else:  # ssprk3, Shu-Osher convex form
            s1 = cls(grid, y0 + dt * L(state))
            s2 = cls(grid, 0.75 * y0 + 0.25 * (s1.density + dt * L(s1)))
            y = (y0 + 2.0 * (s2.density + dt * L(s2))) / 3.0
        return cls(grid, y)


def make_integrator(kind: str, operator: Callable, dt_max) -> Integrator:
    """`dt_max` may be a number (fixed CFL step) or a callable of the state."""
    if callable(dt_max):
        policy = dt_max
    else:
        fixed = float(dt_max)

        def policy(_state):
            return fixed
    return Integrator(kind, operator, policy)


@dataclass
class IntegrationResult:
    final_state: object
    final_time: float
    snapshots: list          # list of (t, state) at the requested times
    n_steps: int


def integrate(integrator: Integrator, state, t_end: float,
              snapshot_times: Sequence[float] = (),
              on_step: Callable | None = None,
              max_steps: int = 50_000_000) -> IntegrationResult:
    """Advance to t_end, hitting every snapshot time and t_end exactly by
    shortening steps (never lengthening them).  `on_step(t, state)` runs after
    every accepted step; raising from it aborts the run.
    """
    if t_end < 0.0:
        raise ValueError("t_end must be >= 0")
    times = list(snapshot_times)
    if sorted(times) != times:
        raise ValueError("snapshot_times must be sorted")
    if times and (times[0] < 0.0 or times[-1] > t_end):
        raise ValueError("snapshot_times must lie within [0, t_end]")

    snapshots = []
    pending = list(times)
    t = 0.0
    while pending and pending[0] == t:
        snapshots.append((t, state))
        pending.pop(0)
    n_steps = 0
    while t < t_end:
        if n_steps >= max_steps:
            raise RuntimeError(f"step budget exceeded after {n_steps} steps at t = {t:g}")
        target = pending[0] if pending else t_end
        dt_full = integrator.dt_max(state)
        if not (dt_full > 0.0 and np.isfinite(dt_full)):
            raise RuntimeError(f"non-positive CFL step {dt_full!r} at step {n_steps}")
        shortened = dt_full >= target - t
        dt = target - t if shortened else dt_full
        try:
            state = integrator.step(state, dt)
        except ValueError as exc:
            raise RuntimeError(f"integration aborted at step {n_steps}: {exc}") from exc
        t = target if shortened else t + dt
        n_steps += 1
        if on_step is not None:
            on_step(t, state)
        while pending and pending[0] <= t:
            snapshots.append((t, state))
            pending.pop(0)
    return IntegrationResult(state, t, snapshots, n_steps)
