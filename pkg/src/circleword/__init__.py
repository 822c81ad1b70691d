"""Circle diffeomorphisms as short words in five explicit generators.

The package builds the generator set F1..F5, searches the conjugation
exponents that compress bump translations into tiny intervals, integrates
the flow fields behind the perfectness decomposition, numerically
linearizes circle maps with Diophantine rotation number, factors
near-identity maps into four commutators, and assembles/verifies the
resulting words, with exact letter-count accounting.
"""

from .core import (
    BumpTranslation,
    Compose,
    Diffeo,
    FourierDisplacement,
    Identity,
    Interval,
    Inverse,
    MetricConfig,
    Power,
    Rotation,
    SampledDiffeo,
    TwoFixedPointMap,
    c0_distance,
    commutator,
    compose,
    conjugate,
    diffeo_from_json,
    distance,
    derivative,
    eval_inverse,
    eval_point,
    support,
    validate_diffeo,
)

__all__ = [
    "BumpTranslation", "Compose", "Diffeo", "FourierDisplacement", "Identity",
    "Interval", "Inverse", "MetricConfig", "Power", "Rotation", "SampledDiffeo",
    "TwoFixedPointMap", "c0_distance", "commutator", "compose", "conjugate",
    "diffeo_from_json", "distance", "derivative", "eval_inverse", "eval_point",
    "support", "validate_diffeo",
]

__version__ = "0.1.0"
