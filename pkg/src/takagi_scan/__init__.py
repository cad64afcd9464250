"""Takagi factorization of parameter-dependent complex symmetric matrices.

Compute A = U S U^T factorizations, continue them smoothly along
one-parameter paths, and locate singular-value degeneracies of
two-parameter fields by reading column sign flips around grid-box loops.
"""

from .errors import (
    AllZeroCounts,
    DegenerateInput,
    DimensionMismatch,
    InconclusiveLoop,
    InsufficientData,
    MatrixFormatError,
    NotSymmetric,
    NotUnitary,
    OutOfSupport,
    StepFloor,
    TakagiError,
)
from .takagi_core import (
    TakagiPair,
    VerifyResult,
    build_doubled,
    ensure_symmetric,
    read_matrix,
    takagi_factor,
    takagi_from_doubled,
    takagi_svd,
    verify_takagi,
    write_matrix,
)
from .continuation import (
    COMPLETED,
    HALTED,
    ContinuationControls,
    ContinuationResult,
    ContinuationState,
    PCStepResult,
    TracePoint,
    continue_path,
    ode_rhs,
    pc_step,
    predict,
    reversed_path,
    write_trace_csv,
)
from .monodromy import (
    BoxEvent,
    Classification,
    MatrixField,
    ScanOptions,
    ScanReport,
    SignFlipVector,
    box_loop,
    circle_loop,
    classify_flips,
    coalescence_demo_field,
    grid_scan,
    loop_signature,
    polyline_path,
    rank_loss_demo_field,
    translate_field,
)
from .ensemble import (
    FIELD_VALUE_SCALE,
    TrigField,
    VarianceTable,
    conjugate_diag_variance,
    field_from_json,
    field_from_seed,
    field_spec_to_json,
    make_field,
    quantile_levels,
    quarter_circle_cdf,
    quarter_circle_pdf,
    random_unitary,
    sample_matrix,
    singular_spectrum,
    singular_spectrum_histogram,
    substream,
    variance_probe,
    write_field_coefficients,
)
from .stats import (
    AsymptoticCounts,
    CountRow,
    FitResult,
    count_series_from_reports,
    expected_count_asymptotics,
    fit_power_law,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
