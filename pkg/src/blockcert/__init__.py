"""Certified guarantees for block-sparse recovery."""

__version__ = "0.1.0"

from .block_core import (  # noqa: E402
    BlockStructure,
    block_norm,
    block_soft_threshold,
    block_support,
    normalize_columns,
    orthonormalize_rows,
    threshold_support,
)
from .bounds import Invalid, block_rip_mc, bound_binf, bound_l2, compare_report, rip_bound  # noqa: E402
from .fixedpoint import FixedPointConfig, OmegaQuery, omega_lower_bound, solve_fixed_point  # noqa: E402
from .harness import EnsembleSpec, ExperimentConfig, generate, preset, run_experiment  # noqa: E402
from .inner_solver import InnerOptions, verify_s_star  # noqa: E402
from .recovery import (  # noqa: E402
    RecoveryOptions,
    RecoveryProblem,
    solve_bsbp,
    solve_bsds,
    solve_bslasso,
    solve_noisefree,
)
