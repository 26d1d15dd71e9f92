"""Affordance-based viewpoint value models for robotic visual assistants.

Teleoperation trials are scored per subject, valued per viewpoint, clustered
into ranked manifolds of equivalent viewpoints per affordance, validated
statistically, and queried for task-level viewpoint advice.
"""

__version__ = "0.1.0"

from .errors import AffordviewError, DegenerateError, MissingModelError, ValidationError
from .geometry import (
    CardinalDirection,
    Viewpoint,
    ViewpointSet,
    area_fraction,
    generate_default_viewpoints,
    load_viewpoints,
    manifold_centroid,
    orthodromic_distance,
)
from .trials import (
    Affordance,
    PerformanceSample,
    TrialRecord,
    TrialSet,
    Weights,
    ingest_trials,
    normalize_subject_measures,
    reject_outliers,
    score_performance,
)
from .valuation import SamplePoint, ViewpointValue, make_sample_points, value_field, viewpoint_value
from .clustering import (
    Dendrogram,
    DissimilarityMatrix,
    Manifold,
    ManifoldSet,
    build_manifold_set,
    calinski_harabasz,
    cut_tree,
    dissimilarity_matrix,
    upgma_tree,
)
from .stats import (
    GroupSummary,
    StatsReport,
    TestResult,
    cohens_d,
    normalize_within_affordance,
    one_way_anova,
    relative_improvement,
    two_way_interaction_anova,
    validate_model,
    welch_t_left,
)
from .advisor import (
    TaskPlan,
    advise,
    compare_manifold_sets,
    extract_cardinal_rules,
    sensitivity_sweep,
)
from .config import PipelineConfig
from .pipeline import run_pipeline, write_artifacts

__all__ = [
    "AffordviewError",
    "DegenerateError",
    "MissingModelError",
    "ValidationError",
    "CardinalDirection",
    "Viewpoint",
    "ViewpointSet",
    "area_fraction",
    "generate_default_viewpoints",
    "load_viewpoints",
    "manifold_centroid",
    "orthodromic_distance",
    "Affordance",
    "PerformanceSample",
    "TrialRecord",
    "TrialSet",
    "Weights",
    "ingest_trials",
    "normalize_subject_measures",
    "reject_outliers",
    "score_performance",
    "SamplePoint",
    "ViewpointValue",
    "make_sample_points",
    "value_field",
    "viewpoint_value",
    "Dendrogram",
    "DissimilarityMatrix",
    "Manifold",
    "ManifoldSet",
    "build_manifold_set",
    "calinski_harabasz",
    "cut_tree",
    "dissimilarity_matrix",
    "upgma_tree",
    "GroupSummary",
    "StatsReport",
    "TestResult",
    "cohens_d",
    "normalize_within_affordance",
    "one_way_anova",
    "relative_improvement",
    "two_way_interaction_anova",
    "validate_model",
    "welch_t_left",
    "TaskPlan",
    "advise",
    "compare_manifold_sets",
    "extract_cardinal_rules",
    "sensitivity_sweep",
    "PipelineConfig",
    "run_pipeline",
    "write_artifacts",
]
