"""Finite-volume solver for the nonlocal aggregation equation on measures,
with exact Monge-Kantorovich diagnostics and a reproduction harness."""

from .measures import (AtomList, DiscreteMeasure1D, DiscreteMeasure2D, Grid1D,
                       Grid2D, cdf, moments, moments_2d, project_atoms,
                       project_atoms_2d, project_density, project_density_2d,
                       tail_first_moment, write_csv)
from .potentials import Potential, kernel_table, kernel_tables_2d, make_potential
from .scheme1d import FluxConfig, max_dt, reconstruct, spatial_operator
from .scheme2d import max_dt_2d, reconstruct_2d, spatial_operator_2d
from .timeint import Integrator, integrate, make_integrator
from .metrics import (EnergyReport, TransportProblem, d1_1d, d1_2d,
                      dissipation_check, interaction_energy, solve_transport)
from .burgers import BurgersState, burgers_solve, burgers_step, difference, primitive
from .harness import (ExperimentConfig, convergence_study, particle_oracle,
                      run_experiment, steady_state_distance)

__version__ = "0.1.0"
