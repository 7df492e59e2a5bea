"""Bit-stream feature based decoder energy modeling toolkit.

Models software video-decoder energy demand as a linear function of
bit-stream feature counts: per-feature energy coefficients are fitted by
bound-constrained least squares, accuracy is evaluated with k-fold
cross-validation, and decode-energy measurement campaigns are run with a
confidence-interval stopping rule.
"""

from decenergy.catalog import (
    BLOCKPEL_PEL_COUNTS,
    CATALOG_KINDS,
    FV_TO_FVS_MAP,
    VALID_BLOCK_DIMENSIONS,
    BlockShape,
    CountingLevel,
    FeatureCatalog,
    FeatureCategory,
    FeatureSpec,
    aggregate_fv_to_fvs,
    blockpel_bin,
    build_catalog,
    dump_catalog_csv,
)
from decenergy.dataset import (
    METADATA_COLUMNS,
    SETUP_LABELS,
    TOOL_ACRONYMS,
    BitstreamRecord,
    Dataset,
    design_matrix,
    detect_catalog_kind,
    expected_header,
    load_dataset,
    merge_datasets,
    relabel,
    save_dataset,
)
from decenergy.errors import (
    FitError,
    MeasurementError,
    SchemaError,
    ToolkitError,
    ValidationError,
)
from decenergy.estimator import (
    EnergyModel,
    FitConfig,
    fit,
    fit_dataset,
    kkt_satisfied,
)
from decenergy.evaluation import (
    EvaluationReport,
    FoldAssignment,
    RecordResult,
    cross_validate,
    evaluate_dataset,
    export_scatter_csv,
    make_folds,
    mean_relative_error,
    scatter_rows,
)
from decenergy.figures import render_scatter
from decenergy.measurement import (
    EnergySample,
    MeasurementSession,
    MockCounterSource,
    RaplCounterSource,
    SessionConfig,
    confidence_satisfied,
    counter_delta,
    run_session,
    t_critical,
)
from decenergy.synth import (
    DEFAULT_TOOL_OFF_PLAN,
    NoiseModel,
    SynthConfig,
    generate,
    load_truth,
    perturb_energy,
    save_truth,
)

__version__ = "0.1.0"

__all__ = [
    "BLOCKPEL_PEL_COUNTS",
    "CATALOG_KINDS",
    "DEFAULT_TOOL_OFF_PLAN",
    "FV_TO_FVS_MAP",
    "METADATA_COLUMNS",
    "SETUP_LABELS",
    "TOOL_ACRONYMS",
    "VALID_BLOCK_DIMENSIONS",
    "BitstreamRecord",
    "BlockShape",
    "CountingLevel",
    "Dataset",
    "EnergyModel",
    "EnergySample",
    "EvaluationReport",
    "FeatureCatalog",
    "FeatureCategory",
    "FeatureSpec",
    "FitConfig",
    "FitError",
    "FoldAssignment",
    "MeasurementError",
    "MeasurementSession",
    "MockCounterSource",
    "NoiseModel",
    "RaplCounterSource",
    "RecordResult",
    "SchemaError",
    "SessionConfig",
    "SynthConfig",
    "ToolkitError",
    "ValidationError",
    "aggregate_fv_to_fvs",
    "blockpel_bin",
    "build_catalog",
    "confidence_satisfied",
    "counter_delta",
    "cross_validate",
    "design_matrix",
    "detect_catalog_kind",
    "dump_catalog_csv",
    "evaluate_dataset",
    "expected_header",
    "export_scatter_csv",
    "fit",
    "fit_dataset",
    "generate",
    "kkt_satisfied",
    "load_dataset",
    "load_truth",
    "make_folds",
    "mean_relative_error",
    "merge_datasets",
    "perturb_energy",
    "relabel",
    "render_scatter",
    "run_session",
    "save_dataset",
    "save_truth",
    "scatter_rows",
    "t_critical",
]
