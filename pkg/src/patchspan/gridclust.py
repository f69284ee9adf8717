"""Density clustering of active grid cells and per-map cluster statistics.

Cells of a binary map are points at their integer (row, col) coordinates.
A cell is a core point when its closed eps-neighborhood (itself included)
holds at least min_pts active cells.  Clusters are connected components of
core points under the <= eps relation; non-core active cells within eps of a
core join that core's cluster, ties going to the first core in row-major scan
order.  Remaining active cells are noise (label NOISE).

Cluster ids are assigned in row-major order of each cluster's first core
point, so results are reproducible across implementations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import label as _cc_label
from scipy.signal import fftconvolve
from scipy.spatial.distance import pdist

from .ensemble import BinaryMap

NOISE = -1

# Above this size, mean pairwise distance switches from explicit pdist to
# counting pair offsets via autocorrelation (exact integer counts).
_PDIST_MAX = 256


@dataclass(frozen=True)
class ClusterParams:
    """Grid DBSCAN parameters; defaults match the detector pipeline."""

    eps: float = 1.0
    min_pts: int = 4

    def __post_init__(self):
        if not (self.eps > 0):
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.min_pts < 1:
            raise ValueError(f"min_pts must be >= 1, got {self.min_pts}")


@dataclass(frozen=True)
class ClusterAssignment:
    """Active cells in row-major order with their cluster labels."""

    points: np.ndarray  # (n, 2) int rows/cols, row-major order
    labels: np.ndarray  # (n,) int, cluster id or NOISE
    n_clusters: int


@dataclass(frozen=True)
class ClusterStats:
    """Per-map summary: cluster count, intra-cluster distance mean/std, active cells."""

    n_clusters: int
    d_mean: float
    d_std: float
    n_imp: int


def neighbor_offsets(eps: float) -> list[tuple[int, int]]:
    """Nonzero integer offsets within Euclidean eps, lexicographic order."""
    r = int(math.floor(eps))
    out = [
        (di, dj)
        for di in range(-r, r + 1)
        for dj in range(-r, r + 1)
        if (di, dj) != (0, 0) and di * di + dj * dj <= eps * eps
    ]
    return out


def _shift_view(shape, di: int, dj: int):
    """Target/source slice pair so that target cell q maps to source q+(di,dj)."""
    h, w = shape
    t = (slice(max(0, -di), h - max(0, di)), slice(max(0, -dj), w - max(0, dj)))
    s = (slice(max(0, di), h - max(0, -di)), slice(max(0, dj), w - max(0, -dj)))
    return t, s


def _closed_neighbor_counts(bits: np.ndarray, offsets) -> np.ndarray:
    counts = bits.astype(np.int32)
    for di, dj in offsets:
        t, s = _shift_view(bits.shape, di, dj)
        counts[t] += bits[s]
    return counts


def _core_components(core: np.ndarray, eps: float, offsets) -> tuple[np.ndarray, int]:
    """Label core cells 0..k-1 in row-major first-encounter order; -1 elsewhere."""
    if not offsets:
        comp = np.full(core.shape, -1, dtype=np.int64)
        comp[core] = np.arange(int(core.sum()))
        return comp, int(core.sum())
    if eps * eps < 4:
        # Within eps < 2 the reach relation is plain 4- or 8-connectivity.
        eight = eps * eps >= 2
        structure = np.ones((3, 3), dtype=bool) if eight else np.array(
            [[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool
        )
        lab, k = _cc_label(core, structure=structure)
        comp = np.full(core.shape, -1, dtype=np.int64)
        if k:
            uniq, first = np.unique(lab.ravel(), return_index=True)
            nz = uniq != 0
            order = np.argsort(first[nz], kind="stable")
            remap = np.empty(k + 1, dtype=np.int64)
            remap[uniq[nz][order]] = np.arange(order.size)
            comp[core] = remap[lab[core]]
        return comp, k
    # eps >= 2: reach spans more than adjacent cells; walk components directly.
    comp = np.full(core.shape, -1, dtype=np.int64)
    h, w = core.shape
    next_id = 0
    for r, c in np.argwhere(core):
        if comp[r, c] != -1:
            continue
        stack = [(int(r), int(c))]
        comp[r, c] = next_id
        while stack:
            cr, cc = stack.pop()
            for di, dj in offsets:
                nr, nc = cr + di, cc + dj
                if 0 <= nr < h and 0 <= nc < w and core[nr, nc] and comp[nr, nc] == -1:
                    comp[nr, nc] = next_id
                    stack.append((nr, nc))
        next_id += 1
    return comp, next_id


def dbscan(bmap: BinaryMap, params: ClusterParams = ClusterParams()) -> ClusterAssignment:
    """Cluster the active cells of a binary map."""
    bits = bmap.bits
    offsets = neighbor_offsets(params.eps)
    counts = _closed_neighbor_counts(bits, offsets)
    core = bits & (counts >= params.min_pts)
    comp, n_clusters = _core_components(core, params.eps, offsets)

    # Border cells take the label of the first core (row-major) that reaches
    # them.  Offsets are generated in lexicographic order, which is exactly
    # row-major order of the neighbor positions.
    unassigned = bits & ~core & (comp == -1)
    for di, dj in offsets:
        t, s = _shift_view(bits.shape, di, dj)
        hit = unassigned[t] & core[s]
        if hit.any():
            comp[t][hit] = comp[s][hit]
            unassigned[t][hit] = False

    points = np.argwhere(bits)
    labels = comp[points[:, 0], points[:, 1]] if len(points) else np.empty(0, dtype=np.int64)
    return ClusterAssignment(points=points, labels=labels, n_clusters=n_clusters)


def _mean_pairwise_distance(pts: np.ndarray) -> float:
    """Mean Euclidean distance over unordered point pairs (0.0 below 2 points)."""
    n = len(pts)
    if n < 2:
        return 0.0
    if n <= _PDIST_MAX:
        return float(pdist(pts.astype(np.float64)).mean())
    # Count ordered pair offsets by autocorrelating the cluster's indicator
    # image; counts are integers, recovered exactly by rounding.
    origin = pts.min(axis=0)
    box = pts - origin
    h, w = box.max(axis=0) + 1
    ind = np.zeros((int(h), int(w)))
    ind[box[:, 0], box[:, 1]] = 1.0
    counts = np.rint(fftconvolve(ind, ind[::-1, ::-1]))
    di = np.arange(-(int(h) - 1), int(h))[:, None]
    dj = np.arange(-(int(w) - 1), int(w))[None, :]
    dist = np.sqrt(di * di + dj * dj)
    return float((counts * dist).sum() / (n * (n - 1)))


def cluster_stats(assignment: ClusterAssignment) -> ClusterStats:
    """Summarize one clustering into the four per-threshold features.

    d_mean/d_std are the mean and population std of the per-cluster average
    intra-cluster distances; with no clusters both are 0.  n_imp counts every
    active cell, noise included.
    """
    n_imp = int(len(assignment.points))
    k = assignment.n_clusters
    if k == 0:
        return ClusterStats(0, 0.0, 0.0, n_imp)
    means = np.empty(k)
    for cid in range(k):
        members = assignment.points[assignment.labels == cid]
        means[cid] = _mean_pairwise_distance(members)
    return ClusterStats(k, float(means.mean()), float(np.std(means)), n_imp)
