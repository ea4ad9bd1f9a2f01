"""Short-and-sparse blind deconvolution by preconditioned quartic
maximization over the sphere, with a landscape audit and experiment harness.
"""

__version__ = "0.1.0"

from .errors import (
    BudgetError,
    ContractError,
    DegenerateKernelError,
    DegenerateStepError,
    DimensionError,
    FileFormatError,
    IterationError,
    ParameterError,
    SingularityError,
    SsbdError,
    StallError,
    ZeroWindowError,
)
from .signals import (
    SparseSignal,
    convolve,
    correlate_windows,
    cyclic_reverse,
    cyclic_shift,
    derive_rng,
    random_unit_kernel,
    read_vector,
    sample_bg,
    scatter_windows,
    truncate,
    write_vector,
    zero_pad,
)
from .shiftmodel import (
    ShiftModel,
    SymEigen,
    coherence,
    estimate_kernel_params,
    inv_sqrt,
    matrix_sqrt,
    precondition,
    shift_matrix,
    spectrum_stats,
    sym_eig,
    window_gram,
)
from .landscape import (
    GapMeasurement,
    ObservationModel,
    RegionCheck,
    StationaryReport,
    classify_stationary,
    cubic_root_intervals,
    expected_quartic,
    gradient_gap,
    hessian_gap,
    min_tangent_eig,
    pop_gradient,
    pop_hessian,
    pop_objective,
    region_check,
    sample_gradient,
    sample_hess_vec,
    sample_objective,
    whitening_gap,
    window_response,
)
from .optimizer import Objective, OptReport, SolveOptions, SolveStatus, descend, retract
from .pipeline import (
    DeconvResult,
    deconvolve,
    init_point,
    lift_kernel,
    shift_truncation_error,
    solve_activation,
)
from .experiments import (
    GridResult,
    GridSpec,
    derive_seed,
    make_kernel,
    run_concentration_sweep,
    run_init_region_rate,
    run_param_sweep,
    run_recovery_grid,
    run_single_trial,
)
