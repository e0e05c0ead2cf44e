"""Tensor-approximation benchmark: heuristics x average bitwidths on Gaussian data.

For each (heuristic, average bitwidth) the distribution of bitwidths is a
hyperparameter: either one fixed policy, or (default) a sweep over the
0.05-step fraction grid on bitwidths 1..4 with every swept row reported.
Homogeneous integer-bitwidth rows are included as reference curves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .binarize import hetero_binarize, reconstruct, residual_binarize
from .bitalloc import BitDistribution, assign_mask, dist_from_avg, distribution_grid, sort_indices
from .errors import ValidationError
from .tensor import gaussian_tensor, normalized_distance

GRID_POLICY = "grid"
HOMOGENEOUS = "homogeneous"


@dataclass(frozen=True)
class ApproxRow:
    heuristic: str
    avg_bits: float
    distribution: str
    seed: int
    normalized_distance: float


def approx_bench(
    n: int,
    seeds,
    avg_bits,
    heuristics,
    policy: str = GRID_POLICY,
    *,
    grid_step: float = 0.05,
    grid_bitwidths=(1, 2, 3, 4),
    include_homogeneous: bool = True,
    signed_middle_out: bool = False,
) -> list[ApproxRow]:
    """One row per (heuristic, average bitwidth, distribution, seed)."""
    if n < 1:
        raise ValidationError(f"tensor size must be >= 1, got {n}")
    dists: dict[float, list[BitDistribution]] = {}
    for avg in avg_bits:
        if policy == GRID_POLICY:
            dists[avg] = distribution_grid(avg, step=grid_step, bitwidths=grid_bitwidths)
            if not dists[avg]:
                raise ValidationError(f"no grid distribution hits average {avg}")
        else:
            dists[avg] = [dist_from_avg(avg, policy)]

    rows: list[ApproxRow] = []
    for seed in seeds:
        t = gaussian_tensor([n], seed)
        if include_homogeneous:
            for width in (1, 2, 3):
                d = normalized_distance(t, reconstruct(residual_binarize(t, width)))
                rows.append(ApproxRow(HOMOGENEOUS, float(width), f"{width}=1", int(seed), d))
        for heuristic in heuristics:
            order = sort_indices(t, heuristic, seed=int(seed), signed_middle_out=signed_middle_out)
            for avg in avg_bits:
                for dist in dists[avg]:
                    mask = assign_mask(order, dist, n)
                    d = normalized_distance(t, reconstruct(hetero_binarize(t, mask)))
                    rows.append(ApproxRow(heuristic, float(avg), dist.describe(), int(seed), d))
    return rows


def best_distances(rows) -> dict[tuple[str, float, int], float]:
    """Per (heuristic, avg_bits, seed): the best distance over distributions."""
    best: dict[tuple[str, float, int], float] = {}
    for row in rows:
        key = (row.heuristic, row.avg_bits, row.seed)
        if key not in best or row.normalized_distance < best[key]:
            best[key] = row.normalized_distance
    return best
