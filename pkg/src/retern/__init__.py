"""Bit-exact ternary compute-in-memory simulator with stuck-at-fault repair."""

__version__ = "0.1.0"

from .ternary import (  # noqa: E402
    BitPair,
    DimensionError,
    QuantizationResult,
    TernaryMatrix,
    ZeroVariant,
    decode,
    encode,
    quantize_absmean,
    round_clip,
)
from .faults import (  # noqa: E402
    FaultInjectionConfig,
    FaultMap,
    FaultState,
    apply_faults,
    classify_faults,
    diagnose,
    inject_faults,
)
from .array_sim import (  # noqa: E402
    ProgrammedTile,
    StoredTile,
    TilePlacement,
    effective_weights,
    full_mvm,
    program_tile,
    store_tile,
    tile_matrix,
    tile_mvm,
)
from .mapping import (  # noqa: E402
    ColumnDecision,
    MappingPlan,
    RepairMode,
    column_errors,
    fast,
    mapping_error,
    plan_mapping,
    zero_fix,
)
from .harness import (  # noqa: E402
    ExperimentConfig,
    SummaryStats,
    TrialStats,
    analytic_expected_error,
    generate_synthetic_weights,
    run_trial,
    sweep,
)
