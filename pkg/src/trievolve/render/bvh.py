"""Axis-aligned bounding-box tree over triangle indices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..genome import Scene

LEAF_SIZE = 4


@dataclass
class Bvh:
    """Flat box tree. Internal node i has left child i+1 and right child
    node_right[i]; leaves have node_count > 0 and reference tri_order slices."""

    node_min: np.ndarray   # (M, 3) float64
    node_max: np.ndarray   # (M, 3) float64
    node_right: np.ndarray  # (M,) int32, -1 for leaves
    node_start: np.ndarray  # (M,) int32
    node_count: np.ndarray  # (M,) int32, 0 for internal nodes
    tri_order: np.ndarray   # (N,) int32

    @property
    def n_nodes(self) -> int:
        return self.node_min.shape[0]


def triangle_vertices(scene: Scene) -> np.ndarray:
    """(N, 3, 3) array of vertex coordinates."""
    return np.array(
        [[t.v1, t.v2, t.v3] for t in scene.triangles], dtype=np.float64
    ).reshape(len(scene), 3, 3)


def build_bvh(scene: Scene) -> Bvh:
    """Median-split tree; an empty scene yields an empty tree that never hits."""
    n = len(scene)
    if n == 0:
        e3 = np.empty((0, 3), np.float64)
        e1i = np.empty(0, np.int32)
        return Bvh(e3, e3.copy(), e1i, e1i.copy(), e1i.copy(), e1i.copy())

    verts = triangle_vertices(scene)
    tri_min = verts.min(axis=1)
    tri_max = verts.max(axis=1)
    centroid = verts.mean(axis=1)

    mins: list[np.ndarray] = []
    maxs: list[np.ndarray] = []
    rights: list[int] = []
    starts: list[int] = []
    counts: list[int] = []
    order: list[int] = []

    def emit(idx: np.ndarray) -> int:
        node = len(mins)
        mins.append(tri_min[idx].min(axis=0))
        maxs.append(tri_max[idx].max(axis=0))
        rights.append(-1)
        starts.append(0)
        counts.append(0)
        if idx.size <= LEAF_SIZE:
            starts[node] = len(order)
            counts[node] = idx.size
            order.extend(int(i) for i in idx)
        else:
            cent = centroid[idx]
            axis = int(np.argmax(cent.max(axis=0) - cent.min(axis=0)))
            ordered = idx[np.argsort(cent[:, axis], kind="stable")]
            half = ordered.size // 2
            emit(ordered[:half])
            rights[node] = emit(ordered[half:])
        return node

    emit(np.arange(n))
    return Bvh(
        node_min=np.ascontiguousarray(mins, dtype=np.float64),
        node_max=np.ascontiguousarray(maxs, dtype=np.float64),
        node_right=np.asarray(rights, dtype=np.int32),
        node_start=np.asarray(starts, dtype=np.int32),
        node_count=np.asarray(counts, dtype=np.int32),
        tri_order=np.asarray(order, dtype=np.int32),
    )
