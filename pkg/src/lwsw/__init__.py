"""Bound states of coupled long-wave / short-wave interaction systems.

Constrained energy minimization on a periodic spectral grid, sweeps over the
constraint level, and split-step time evolution of the resulting traveling
waves.
"""

from .energy import (
    CouplingParams,
    Profile,
    constraint,
    energy,
    grad_constraint,
    grad_energy,
    masses,
)
from .evolution import (
    EvolutionState,
    EvolveOptions,
    WaveParams,
    evolve,
    synthesize_initial,
    traveling_error,
)
from .grid import Grid, make_grid, read_field, write_field
from .minimizer import (
    MinimizerResult,
    SolveOptions,
    SolverError,
    concentration,
    decay_fit,
    el_residual,
    lagrange_multiplier,
    minimize,
    positivity_certificate,
    solve,
)
from .scan import (
    check_monotone_and_scaling,
    check_subadditivity,
    family,
    fit_bounds,
    scan,
    solve_adaptive,
    wave_params,
)

__version__ = "0.1.0"
