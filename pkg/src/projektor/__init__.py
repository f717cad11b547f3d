"""Structured inference over hierarchical compositional models.

Models map onto ambiguous data through an interaction of bottom-up candidate
construction and top-down, constraint-guided revision; competing model
instances are arbitrated so the scene is explained without redundancy.
"""

from .errors import (
    BindingError,
    ConstraintError,
    DomainMismatchError,
    InputError,
    InstanceTooLargeError,
    ModelFormatError,
    ModelValidationError,
    ProjektorError,
    ScorerEvalError,
    ScorerSpecError,
)
from .evaluation import GroundTruth, Metrics, TruthInstance, evaluate_metrics
from .inference import (
    BeamConfig,
    CandidateTable,
    InterpretationResult,
    best_bottom_up_score,
    bottom_up_pass,
    brute_force_oracle,
    interpret,
    project_refine,
)
from .model import (
    DEFAULT_THETA_MISS,
    DataSet,
    Datum,
    Element,
    InstantiatedModel,
    Level,
    Model,
    ValidationReport,
    Violation,
    infer_domain,
    load_model,
    populate,
    score_tree,
    serialize_model,
    validate_model,
)
from .scorers import (
    Constraint,
    ScorerSpec,
    eval_relation,
    list_catalog,
    predict_constraint,
)
from .workspace import (
    ArbitrationConfig,
    ModelRegistry,
    SceneInterpretation,
    arbitrate,
    force_mapping,
    interpret_scene,
    load_registry,
    propose,
    save_registry,
)

__version__ = "0.1.0"

__all__ = [
    "ArbitrationConfig", "BeamConfig", "BindingError", "CandidateTable",
    "Constraint", "ConstraintError", "DataSet", "Datum", "DEFAULT_THETA_MISS",
    "DomainMismatchError", "Element", "GroundTruth", "InputError",
    "InstanceTooLargeError", "InstantiatedModel", "InterpretationResult",
    "Level", "Metrics", "Model", "ModelFormatError", "ModelRegistry",
    "ModelValidationError", "ProjektorError", "SceneInterpretation",
    "ScorerEvalError", "ScorerSpec", "ScorerSpecError", "TruthInstance",
    "ValidationReport", "Violation", "arbitrate", "best_bottom_up_score",
    "bottom_up_pass", "brute_force_oracle", "eval_relation", "evaluate_metrics",
    "force_mapping", "infer_domain", "interpret", "interpret_scene",
    "list_catalog", "load_model", "load_registry", "populate",
    "predict_constraint", "project_refine", "propose", "save_registry",
    "score_tree", "serialize_model", "validate_model",
]
