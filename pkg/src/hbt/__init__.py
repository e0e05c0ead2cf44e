"""Heterogeneous-bitwidth binarization toolkit.

Approximates tensors as stacks of sign bit-planes where every element can use
a different number of bits, so the average bitwidth is fractional. Ships the
binarization/reconstruction core, mask-generation heuristics, a word-packed
xnor-popcount execution engine, a desk-scale training harness with clipped
pass-through gradients, and an FPGA/ASIC cost extrapolation model, all behind
the ``hbt`` command line.
"""

from .binarize import (
    MAX_BITS,
    HeterogeneousBinaryTensor,
    Plane,
    hard_sigmoid,
    hetero_binarize,
    reconstruct,
    residual_binarize,
    scaled_sign_binarize,
    sign_binarize,
    ste_gradient,
    stochastic_binarize,
    validate_mask,
)
from .bitalloc import (
    HEURISTICS,
    BitDistribution,
    average_bitwidth,
    dist_from_avg,
    distribution_grid,
    generate_mask,
    make_distribution,
    sort_indices,
)
from .errors import DataIOError, HbtError, NumericError, ShapeError, ValidationError
from .packed import (
    PackedPlane,
    PackedPlanes,
    active_pair_count,
    bit_product,
    bitop_count,
    op_reduction_factor,
    pack,
    pack_rows,
    unpack,
    xnor_dot,
    xnor_matmul,
    xnor_matvec,
)
from .tensor import RNG_ALGORITHM, RngStream, gaussian_tensor, mean_abs, normalized_distance

__version__ = "0.1.0"

__all__ = [
    "MAX_BITS",
    "RNG_ALGORITHM",
    "BitDistribution",
    "DataIOError",
    "HbtError",
    "HeterogeneousBinaryTensor",
    "HEURISTICS",
    "NumericError",
    "PackedPlane",
    "PackedPlanes",
    "Plane",
    "RngStream",
    "ShapeError",
    "ValidationError",
    "active_pair_count",
    "average_bitwidth",
    "bit_product",
    "bitop_count",
    "dist_from_avg",
    "distribution_grid",
    "gaussian_tensor",
    "generate_mask",
    "hard_sigmoid",
    "hetero_binarize",
    "make_distribution",
    "mean_abs",
    "normalized_distance",
    "op_reduction_factor",
    "pack",
    "pack_rows",
    "reconstruct",
    "residual_binarize",
    "scaled_sign_binarize",
    "sign_binarize",
    "sort_indices",
    "ste_gradient",
    "stochastic_binarize",
    "unpack",
    "validate_mask",
    "xnor_dot",
    "xnor_matmul",
    "xnor_matvec",
    "__version__",
]
