"""Granular graphs: rectangles as nodes, pixel overlap as edges.

Node features are 8-vectors
[c_x, c_y, v_mean, v_var, r_x, r_y, v_max, v_min] with coordinates and
radii normalized by the image width/height; pixel statistics are already
in [0, 1]. Two nodes are connected exactly when, per axis, the absolute
center distance minus one is less than the radius sum — for integer
centers and radii this is equivalent to the clipped rectangles sharing at
least one pixel.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .granulation import GranularRectangle

FEATURE_DIM = 8
COL_CX, COL_CY, COL_MEAN, COL_VAR, COL_RX, COL_RY, COL_MAX, COL_MIN = range(8)
VALUE_COLUMNS = (COL_MEAN, COL_VAR, COL_MAX, COL_MIN)
POSITION_COLUMNS = (COL_CX, COL_CY, COL_RX, COL_RY)


class GraphSchemaError(ValueError):
    """A serialized graph payload violates the JSON schema."""


@dataclass(frozen=True)
class GranularGraph:
    """Graph of granular rectangles for one labeled image."""

    node_features: np.ndarray  # (k, 8) float64, normalized
    adjacency: np.ndarray      # (k, k) bool, symmetric, zero diagonal
    label: int
    source_width: int
    source_height: int

    def __post_init__(self):
        feats = np.asarray(self.node_features, dtype=np.float64)
        adj = np.asarray(self.adjacency, dtype=bool)
        k = feats.shape[0]
        if k < 1 or feats.shape != (k, FEATURE_DIM):
            raise ValueError(f"node features must be (k, {FEATURE_DIM}) with k >= 1")
        if adj.shape != (k, k):
            raise ValueError("adjacency shape does not match node count")
        if adj.diagonal().any():
            raise ValueError("adjacency diagonal must be zero")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if feats.size and (feats.min() < 0.0 or feats.max() > 1.0):
            raise ValueError("normalized features must lie in [0, 1]")
        feats = feats.copy()
        adj = adj.copy()
        feats.flags.writeable = False
        adj.flags.writeable = False
        object.__setattr__(self, "node_features", feats)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "label", int(self.label))
        object.__setattr__(self, "source_width", int(self.source_width))
        object.__setattr__(self, "source_height", int(self.source_height))

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def num_edges(self) -> int:
        return int(self.adjacency.sum()) // 2


def overlap_adjacency(centers_x: np.ndarray, centers_y: np.ndarray,
                      radii_x: np.ndarray, radii_y: np.ndarray) -> np.ndarray:
    """Pairwise edge matrix: |dc| - 1 < r_i + r_j on both axes.

    Evaluated in row blocks so the temporaries stay cache-resident; the
    cost is uniformly O(k^2) regardless of node count.
    """
    cx = np.asarray(centers_x, dtype=np.int32)
    cy = np.asarray(centers_y, dtype=np.int32)
    rx = np.asarray(radii_x, dtype=np.int32)
    ry = np.asarray(radii_y, dtype=np.int32)
    k = cx.shape[0]
    adj = np.empty((k, k), dtype=bool)
    block = max(1, min(k, 1_000_000 // max(k, 1)))
    for start in range(0, k, block):
        stop = min(start + block, k)
        edge_x = (np.abs(cx[start:stop, None] - cx[None, :]) - 1) \
            < (rx[start:stop, None] + rx[None, :])
        edge_y = (np.abs(cy[start:stop, None] - cy[None, :]) - 1) \
            < (ry[start:stop, None] + ry[None, :])
        adj[start:stop] = edge_x & edge_y
    np.fill_diagonal(adj, False)
    return adj


def build_graph(rects: Sequence[GranularRectangle], width: int, height: int,
                label: int) -> GranularGraph:
    """Assemble rectangles from one image into a granular graph."""
    if not rects:
        raise ValueError("cannot build a graph from an empty rectangle list")
    cx = np.array([r.center_x for r in rects])
    cy = np.array([r.center_y for r in rects])
    rx = np.array([r.r_x for r in rects])
    ry = np.array([r.r_y for r in rects])
    feats = np.column_stack([
        cx / width,
        cy / height,
        [r.mean for r in rects],
        [r.variance for r in rects],
        rx / width,
        ry / height,
        [r.max_val for r in rects],
        [r.min_val for r in rects],
    ])
    return GranularGraph(feats, overlap_adjacency(cx, cy, rx, ry),
                         label, width, height)


def _edge_list(graph: GranularGraph) -> list[list[int]]:
    ii, jj = np.nonzero(np.triu(graph.adjacency, 1))
    return sorted([int(i), int(j)] for i, j in zip(ii, jj))


def serialize_graph(graph: GranularGraph) -> bytes:
    """Canonical JSON bytes; structurally equal graphs serialize identically."""
    payload = {
        "width": graph.source_width,
        "height": graph.source_height,
        "label": graph.label,
        "nodes": [[float(v) for v in row] for row in graph.node_features],
        "edges": _edge_list(graph),
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("ascii")


def deserialize_graph(data: bytes) -> GranularGraph:
    """Parse and validate a serialized graph payload."""
    try:
        payload = json.loads(data)
    except json.JSONDecodeError as exc:
        raise GraphSchemaError(f"payload is not valid JSON: {exc}") from exc
    return graph_from_payload(payload)


def graph_from_payload(payload) -> GranularGraph:
    """Build a graph from a decoded JSON object, checking the schema."""
    if not isinstance(payload, dict):
        raise GraphSchemaError("top-level payload must be an object")
    missing = {"width", "height", "label", "nodes", "edges"} - payload.keys()
    if missing:
        raise GraphSchemaError(f"missing keys: {sorted(missing)}")
    width, height, label = payload["width"], payload["height"], payload["label"]
    nodes, edges = payload["nodes"], payload["edges"]
    if not isinstance(width, int) or not isinstance(height, int) \
            or not isinstance(label, int):
        raise GraphSchemaError("width, height and label must be integers")
    if not isinstance(nodes, list) or not nodes:
        raise GraphSchemaError("nodes must be a non-empty list")
    for row in nodes:
        if not isinstance(row, list) or len(row) != FEATURE_DIM \
                or not all(isinstance(v, (int, float)) for v in row):
            raise GraphSchemaError(f"each node must be a list of {FEATURE_DIM} floats")
    k = len(nodes)
    adj = np.zeros((k, k), dtype=bool)
    if not isinstance(edges, list):
        raise GraphSchemaError("edges must be a list")
    seen = set()
    for edge in edges:
        if not isinstance(edge, list) or len(edge) != 2 \
                or not all(isinstance(v, int) for v in edge):
            raise GraphSchemaError(f"malformed edge {edge!r}")
        i, j = edge
        if i == j:
            raise GraphSchemaError(f"self-loop edge [{i}, {j}]")
        if not i < j:
            raise GraphSchemaError(f"edge [{i}, {j}] must satisfy i < j")
        if not (0 <= i < k and 0 <= j < k):
            raise GraphSchemaError(f"edge [{i}, {j}] out of range for {k} nodes")
        if (i, j) in seen:
            raise GraphSchemaError(f"duplicate edge [{i}, {j}]")
        seen.add((i, j))
        adj[i, j] = adj[j, i] = True
    try:
        return GranularGraph(np.array(nodes, dtype=np.float64), adj,
                             label, width, height)
    except ValueError as exc:
        raise GraphSchemaError(str(exc)) from exc


def save_graphs(graphs: Sequence[GranularGraph], path) -> None:
    """Write a dataset shard as one JSON array of graph payloads."""
    rows = [json.loads(serialize_graph(g)) for g in graphs]
    with open(path, "w", encoding="ascii") as f:
        json.dump(rows, f, sort_keys=True, separators=(",", ":"))


def load_graphs(path) -> list[GranularGraph]:
    """Read a shard written by `save_graphs`."""
    with open(path, "r", encoding="ascii") as f:
        rows = json.load(f)
    if not isinstance(rows, list):
        raise GraphSchemaError("shard file must contain a JSON array")
    return [graph_from_payload(row) for row in rows]
