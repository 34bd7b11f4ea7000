"""Score-adaptive pruning with certified retained-mass bounds.

The package converts any pruning score vector into a built-in keep
threshold (the inverse Simpson index of the normalized scores), applies
beta-scaled top-k masks, evaluates closed-form lower bounds on the
retained mass together with loss-change bounds, and ships desk-scale
demonstrations on images and tiny dense networks.
"""

from .core import (
    EmpDecision,
    Partition,
    SimplexPoint,
    combine_min,
    combined_mask,
    effective_number,
    emp_decide,
    emp_decide_partitioned,
    normalize,
    partition_sparsity,
    retained_mass,
)

__version__ = "0.1.0"

__all__ = [
    "EmpDecision",
    "Partition",
    "SimplexPoint",
    "combine_min",
    "combined_mask",
    "effective_number",
    "emp_decide",
    "emp_decide_partitioned",
    "normalize",
    "partition_sparsity",
    "retained_mass",
    "__version__",
]
