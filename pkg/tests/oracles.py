"""Slow brute-force reference implementations used to check the library."""

from __future__ import annotations

import itertools
import math
from collections import deque

import numpy as np


def neighbor_offsets(connectivity: int) -> list[tuple[int, int, int]]:
    offsets = [d for d in itertools.product((-1, 0, 1), repeat=3) if d != (0, 0, 0)]
    if connectivity == 6:
        return [d for d in offsets if sum(map(abs, d)) == 1]
    return offsets


def flood_fill_components(mask: np.ndarray, connectivity: int) -> list[set[tuple[int, int, int]]]:
    """Connected components of ``mask`` by breadth-first flood fill."""
    seen = np.zeros(mask.shape, dtype=bool)
    offsets = neighbor_offsets(connectivity)
    components = []
    for start in zip(*np.nonzero(mask)):
        start = tuple(int(i) for i in start)
        if seen[start]:
            continue
        seen[start] = True
        queue = deque([start])
        component = set()
        while queue:
            voxel = queue.popleft()
            component.add(voxel)
            for d in offsets:
                n = tuple(v + o for v, o in zip(voxel, d))
                if all(0 <= i < s for i, s in zip(n, mask.shape)) and mask[n] and not seen[n]:
                    seen[n] = True
                    queue.append(n)
        components.append(component)
    return components


def min_corner(voxels) -> tuple[int, int, int]:
    return tuple(min(v[a] for v in voxels) for a in range(3))


def largest_component_oracle(mask: np.ndarray, connectivity: int) -> np.ndarray:
    out = np.zeros(mask.shape, dtype=np.uint8)
    components = flood_fill_components(mask, connectivity)
    if not components:
        return out
    keep = min(components, key=lambda c: (-len(c), min_corner(c), min(c)))
    for voxel in keep:
        out[voxel] = 1
    return out


def bounding_box_oracle(mask: np.ndarray) -> tuple[tuple[int, ...], tuple[int, ...]]:
    voxels = [tuple(int(i) for i in v) for v in zip(*np.nonzero(mask))]
    lo = tuple(min(v[a] for v in voxels) for a in range(3))
    hi = tuple(max(v[a] for v in voxels) + 1 for a in range(3))
    return lo, hi


def boundary_oracle(mask: np.ndarray) -> list[tuple[int, int, int]]:
    """Set voxels with a 6-neighbor outside the mask or outside the grid."""
    out = []
    for voxel in zip(*np.nonzero(mask)):
        for d in neighbor_offsets(6):
            n = tuple(int(v) + o for v, o in zip(voxel, d))
            if not all(0 <= i < s for i, s in zip(n, mask.shape)) or not mask[n]:
                out.append(tuple(int(v) for v in voxel))
                break
    return out


def asd_oracle(pred: np.ndarray, gt: np.ndarray, spacing) -> float:
    """Symmetric average surface distance by all-pairs comparison."""
    bp = np.array(boundary_oracle(pred), dtype=np.float64) * np.asarray(spacing)
    bg = np.array(boundary_oracle(gt), dtype=np.float64) * np.asarray(spacing)
    d_pg = [min(math.dist(p, g) for g in bg) for p in bp]
    d_gp = [min(math.dist(g, p) for p in bp) for g in bg]
    return (sum(d_pg) + sum(d_gp)) / (len(d_pg) + len(d_gp))


def soft_jaccard_oracle(pred: np.ndarray, target: np.ndarray, epsilon: float) -> float:
    """Loss summed voxel by voxel in plain Python."""
    n_classes = pred.shape[0]
    total = 0.0
    for c in range(n_classes):
        inter = 0.0
        union = 0.0
        for idx in np.ndindex(*pred.shape[1:]):
            p = float(pred[(c, *idx)])
            t = float(target[(c, *idx)])
            inter += p * t
            union += p + t - p * t
        total += (inter + epsilon) / (union + epsilon)
    return 1.0 - total / n_classes


def percentile_oracle(values, pct: float) -> float:
    """Linear interpolation between order statistics."""
    ordered = sorted(float(v) for v in values)
    rank = pct / 100.0 * (len(ordered) - 1)
    lo = math.floor(rank)
    hi = min(lo + 1, len(ordered) - 1)
    return ordered[lo] + (ordered[hi] - ordered[lo]) * (rank - lo)


def polyline_distance_oracle(point, polyline, samples: int = 10_000) -> float:
    """Minimum distance from ``point`` to densely sampled polyline segments."""
    best = math.inf
    segments = list(zip(polyline[:-1], polyline[1:])) or [(polyline[0], polyline[0])]
    per_segment = max(2, samples // len(segments))
    for a, b in segments:
        for t in np.linspace(0.0, 1.0, per_segment):
            q = [ai + t * (bi - ai) for ai, bi in zip(a, b)]
            best = min(best, math.dist(point, q))
    return best


def random_mask(rng: np.random.Generator, shape, density: float) -> np.ndarray:
    return rng.random(shape) < density
