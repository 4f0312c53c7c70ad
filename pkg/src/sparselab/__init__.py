"""sparselab: sparse-attention patterns, assumption verification,
probability maps, attention blocks, exact and soft memorization
constructions on the delta-grid, and a micro-scale trainable model with
a synthetic copying task.
"""

from . import (
    attention,
    construction,
    errors,
    numerics,
    patterns,
    probmaps,
    training,
    verify,
)
from .errors import (
    ConfigError,
    IntegrityError,
    ParameterError,
    ShapeError,
    TrainingError,
)
from .patterns import (
    HeadConfig,
    SparsityPattern,
    dense,
    fixed,
    random_pattern,
    star,
    strided,
    window_global,
)
from .probmaps import MapKind, ProbabilityMapSpec

__version__ = "0.1.0"

__all__ = [
    "attention",
    "construction",
    "errors",
    "numerics",
    "patterns",
    "probmaps",
    "training",
    "verify",
    "ConfigError",
    "IntegrityError",
    "ParameterError",
    "ShapeError",
    "TrainingError",
    "HeadConfig",
    "SparsityPattern",
    "dense",
    "fixed",
    "random_pattern",
    "star",
    "strided",
    "window_global",
    "MapKind",
    "ProbabilityMapSpec",
    "__version__",
]
