"""Testing regression functions for equivariance under finite group actions."""

__version__ = "0.1.0"

from .avt import AsymmetricVariationTest, AvtConfig, AvtReport, binomial_tail, run_avt
from .core import (
    Dataset,
    GeneratorDistribution,
    GroupAction,
    Metric,
    NoiseModel,
    OutputNorm,
    VariationBound,
    action_from_spec,
    d4_image_action,
    permutation_action,
    rotation_action,
    rotation_star_action,
)
from .pvt import PermutationVariationTest, PvtConfig, PvtReport, run_pvt
from .sampling import SeededRng, derive_seed

__all__ = [
    "AsymmetricVariationTest",
    "AvtConfig",
    "AvtReport",
    "Dataset",
    "GeneratorDistribution",
    "GroupAction",
    "Metric",
    "NoiseModel",
    "OutputNorm",
    "PermutationVariationTest",
    "PvtConfig",
    "PvtReport",
    "SeededRng",
    "VariationBound",
    "action_from_spec",
    "binomial_tail",
    "d4_image_action",
    "derive_seed",
    "permutation_action",
    "rotation_action",
    "rotation_star_action",
    "run_avt",
    "run_pvt",
]
