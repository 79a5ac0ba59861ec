"""rotodrop: dropout bit-mask generation strategies and their hardware costs.

The package compares the conventional RNG+comparator way of producing
dropout masks (serial and parallel hardware forms) with a rotation-based
generator that stores one predefined mask and circularly rotates it, and
provides the cycle/resource model and desk-scale training harness needed
to study both.
"""

from .mask import (BitMask, apply_mask, make_bernoulli_mask, make_exact_mask,
                   popcount, rotate)
from .generators import (GeneralMaskGenerator, GeneratorConfig, GeneratorKind,
                         Lfsr, ProposedMaskGenerator, RotationSchedule,
                         generator_stream, make_generator)
from .hwcost import HwCostReport, compare_costs, cost_model, mask_generation_latency

__version__ = "0.1.0"

__all__ = [
    "BitMask",
    "GeneralMaskGenerator",
    "GeneratorConfig",
    "GeneratorKind",
    "HwCostReport",
    "Lfsr",
    "ProposedMaskGenerator",
    "RotationSchedule",
    "apply_mask",
    "compare_costs",
    "cost_model",
    "generator_stream",
    "make_bernoulli_mask",
    "make_exact_mask",
    "make_generator",
    "mask_generation_latency",
    "popcount",
    "rotate",
]
