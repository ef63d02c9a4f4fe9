"""Layerwise pruning mask selection by Frank-Wolfe over the relaxed mask polytope."""

from .core import (NM, BinaryMask, BudgetError, CapacityError, FormatError,
                   GramCache, MaskoptError, MaskState, NumericalError,
                   PatternError, PerRow, ShapeError, SparsityPattern,
                   Unstructured, generate_synthetic_layer, gram_precompute,
                   satisfies_pattern)
from .matrix_io import load_matrix, save_matrix
from .objective import (ObjectiveContext, fw_gap, gradient, lambda_max,
                        lambda_max_full, loss, row_hessian)
from .solver import (SolverConfig, SolveTrace, fw_solve, fw_solve_fixed,
                     step_size, threshold_topk)

__version__ = "0.1.0"
