"""Dense neural stack: a two-layer graph convolution network for graph
classification, a two-layer MLP pixel baseline, and hand-written
reverse-mode gradients for both.

Parameters travel as flat float64 vectors with an explicit segment layout
so federation and checkpointing treat every model uniformly.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .datasets import Image
from .graphs import FEATURE_DIM, GranularGraph

CHECKPOINT_MAGIC = b"GFL1"


@dataclass(frozen=True)
class ParamSegment:
    name: str
    rows: int
    cols: int

    @property
    def size(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class ParamLayout:
    """Ordered weight-matrix segments backing one flat parameter vector."""

    segments: tuple[ParamSegment, ...]

    @property
    def total_size(self) -> int:
        return sum(s.size for s in self.segments)

    def offset_of(self, name: str) -> tuple[int, ParamSegment]:
        offset = 0
        for seg in self.segments:
            if seg.name == name:
                return offset, seg
            offset += seg.size
        raise KeyError(f"no segment named {name!r}")


@dataclass
class ParamVector:
    """Flat parameter vector plus the layout interpreting it."""

    layout: ParamLayout
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.size != self.layout.total_size:
            raise ValueError(
                f"value length {self.values.size} does not match layout "
                f"size {self.layout.total_size}")

    def view(self, name: str) -> np.ndarray:
        """Matrix view of one segment; writes through to the flat vector."""
        offset, seg = self.layout.offset_of(name)
        return self.values[offset:offset + seg.size].reshape(seg.rows, seg.cols)

    def copy(self) -> "ParamVector":
        return ParamVector(self.layout, self.values.copy())

    def __len__(self) -> int:
        return self.values.size


def zeros_like(params: ParamVector) -> ParamVector:
    return ParamVector(params.layout, np.zeros_like(params.values))


def xavier_init(layout: ParamLayout, rng: np.random.Generator) -> ParamVector:
    """Uniform(-s, s) per segment with s = sqrt(6 / (fan_in + fan_out))."""
    chunks = []
    for seg in layout.segments:
        s = np.sqrt(6.0 / (seg.rows + seg.cols))
        chunks.append(rng.uniform(-s, s, seg.size))
    return ParamVector(layout, np.concatenate(chunks))


def sgd_step(params: ParamVector, grad: ParamVector, lr: float) -> ParamVector:
    """Elementwise params - lr * grad."""
    if params.layout != grad.layout:
        raise ValueError("parameter and gradient layouts differ")
    return ParamVector(params.layout, params.values - lr * grad.values)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def softmax_cross_entropy(logits: np.ndarray, label: int
                          ) -> tuple[float, np.ndarray]:
    """Stabilized cross entropy; gradient is softmax minus one-hot."""
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range for {logits.shape[0]} classes")
    p = softmax(logits)
    loss = -np.log(max(p[label], np.finfo(np.float64).tiny))
    dlogits = p.copy()
    dlogits[label] -= 1.0
    return float(loss), dlogits


def normalized_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Symmetric degree-normalized adjacency with self-loops added."""
    adj = np.asarray(adjacency)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency must be square")
    if adj.diagonal().any():
        raise ValueError("adjacency diagonal must be zero")
    if not np.array_equal(adj, adj.T):
        raise ValueError("adjacency must be symmetric")
    a_loop = adj.astype(np.float64) + np.eye(adj.shape[0])
    inv_sqrt_deg = 1.0 / np.sqrt(a_loop.sum(axis=1))
    return a_loop * inv_sqrt_deg[:, None] * inv_sqrt_deg[None, :]


# ---------------------------------------------------------------------------
# Two-layer GCN: logits = mean_rows(A_hat @ relu(A_hat @ X @ W1) @ W2)

@dataclass(frozen=True)
class GCNCache:
    """Forward intermediates reused by the backward pass."""

    a_hat: np.ndarray
    mixed_x: np.ndarray       # A_hat @ X
    pre_act: np.ndarray       # mixed_x @ W1
    hidden: np.ndarray        # relu(pre_act)
    mixed_hidden: np.ndarray  # A_hat @ hidden


def gcn_layout(hidden: int, num_classes: int) -> ParamLayout:
    return ParamLayout((
        ParamSegment("w1", FEATURE_DIM, hidden),
        ParamSegment("w2", hidden, num_classes),
    ))


def gcn_forward_features(features: np.ndarray, a_hat: np.ndarray,
                         params: ParamVector) -> tuple[np.ndarray, GCNCache]:
    w1, w2 = params.view("w1"), params.view("w2")
    mixed_x = a_hat @ features
    pre_act = mixed_x @ w1
    hidden = np.maximum(pre_act, 0.0)
    mixed_hidden = a_hat @ hidden
    logits = (mixed_hidden @ w2).mean(axis=0)
    return logits, GCNCache(a_hat, mixed_x, pre_act, hidden, mixed_hidden)


def gcn_forward(graph: GranularGraph, params: ParamVector
                ) -> tuple[np.ndarray, GCNCache]:
    """Class logits for one graph, plus cached activations."""
    a_hat = normalized_adjacency(graph.adjacency)
    return gcn_forward_features(graph.node_features, a_hat, params)


def gcn_loss_and_grad(graph: GranularGraph, params: ParamVector, label: int
                      ) -> tuple[float, ParamVector]:
    """Cross-entropy loss and exact parameter gradient for one graph."""
    logits, cache = gcn_forward(graph, params)
    loss, dlogits = softmax_cross_entropy(logits, label)
    grad = zeros_like(params)
    _gcn_param_grad(cache, params, dlogits, grad.view("w1"), grad.view("w2"))
    return loss, grad


def _gcn_param_grad(cache: GCNCache, params: ParamVector, dlogits: np.ndarray,
                    out_dw1: np.ndarray, out_dw2: np.ndarray) -> None:
    """Reverse pass from dlogits into the weight gradient buffers."""
    w2 = params.view("w2")
    k = cache.mixed_x.shape[0]
    d_pool = np.repeat(dlogits[None, :] / k, k, axis=0)
    out_dw2[...] = cache.mixed_hidden.T @ d_pool
    d_mixed_hidden = d_pool @ w2.T
    d_hidden = cache.a_hat @ d_mixed_hidden
    d_pre = d_hidden * (cache.pre_act > 0.0)
    out_dw1[...] = cache.mixed_x.T @ d_pre


# ---------------------------------------------------------------------------
# Two-layer MLP over flattened pixels: logits = relu(x @ W1) @ W2

@dataclass(frozen=True)
class MLPCache:
    x: np.ndarray
    pre_act: np.ndarray
    hidden: np.ndarray


def mlp_layout(input_dim: int, hidden: int, num_classes: int) -> ParamLayout:
    return ParamLayout((
        ParamSegment("w1", input_dim, hidden),
        ParamSegment("w2", hidden, num_classes),
    ))


def mlp_forward_flat(x: np.ndarray, params: ParamVector
                     ) -> tuple[np.ndarray, MLPCache]:
    w1, w2 = params.view("w1"), params.view("w2")
    pre_act = x @ w1
    hidden = np.maximum(pre_act, 0.0)
    return hidden @ w2, MLPCache(x, pre_act, hidden)


def mlp_forward(image: Image, params: ParamVector) -> tuple[np.ndarray, MLPCache]:
    """Class logits for one image, plus cached activations."""
    return mlp_forward_flat(image.flat, params)


def mlp_loss_and_grad_flat(x: np.ndarray, params: ParamVector, label: int
                           ) -> tuple[float, ParamVector]:
    logits, cache = mlp_forward_flat(x, params)
    loss, dlogits = softmax_cross_entropy(logits, label)
    grad = zeros_like(params)
    _mlp_param_grad(cache, params, dlogits, grad.view("w1"), grad.view("w2"))
    return loss, grad


def mlp_loss_and_grad(image: Image, params: ParamVector, label: int
                      ) -> tuple[float, ParamVector]:
    """Cross-entropy loss and exact parameter gradient for one image."""
    return mlp_loss_and_grad_flat(image.flat, params, label)


def _mlp_param_grad(cache: MLPCache, params: ParamVector, dlogits: np.ndarray,
                    out_dw1: np.ndarray, out_dw2: np.ndarray) -> None:
    w2 = params.view("w2")
    out_dw2[...] = np.outer(cache.hidden, dlogits)
    d_hidden = w2 @ dlogits
    d_pre = d_hidden * (cache.pre_act > 0.0)
    out_dw1[...] = np.outer(cache.x, d_pre)


# ---------------------------------------------------------------------------
# Model adapters: a uniform surface over samples for federation and metrics.

class GCNModel:
    """Graph classifier; samples are GranularGraph instances."""

    kind = "gcn"

    def __init__(self, hidden: int, num_classes: int):
        self.hidden = hidden
        self.num_classes = num_classes
        self.layout = gcn_layout(hidden, num_classes)

    def init_params(self, rng: np.random.Generator) -> ParamVector:
        return xavier_init(self.layout, rng)

    def logits(self, params: ParamVector, sample: GranularGraph) -> np.ndarray:
        return gcn_forward(sample, params)[0]

    def loss_and_grad(self, params: ParamVector, sample: GranularGraph,
                      label: int) -> tuple[float, ParamVector]:
        return gcn_loss_and_grad(sample, params, label)


class MLPModel:
    """Pixel classifier; samples are Image instances."""

    kind = "mlp"

    def __init__(self, input_dim: int, hidden: int, num_classes: int):
        self.input_dim = input_dim
        self.hidden = hidden
        self.num_classes = num_classes
        self.layout = mlp_layout(input_dim, hidden, num_classes)

    def init_params(self, rng: np.random.Generator) -> ParamVector:
        return xavier_init(self.layout, rng)

    def logits(self, params: ParamVector, sample: Image) -> np.ndarray:
        return mlp_forward(sample, params)[0]

    def loss_and_grad(self, params: ParamVector, sample: Image,
                      label: int) -> tuple[float, ParamVector]:
        return mlp_loss_and_grad(sample, params, label)


# ---------------------------------------------------------------------------
# Checkpoints: segment table + little-endian float64 payload.
#
#   magic  4 bytes  b"GFL1"
#   u32    number of segments
#   per segment: u32 name length, utf-8 name, u32 rows, u32 cols
#   payload: total_size float64 values, little-endian

def params_to_bytes(params: ParamVector) -> bytes:
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", len(params.layout.segments))]
    for seg in params.layout.segments:
        name = seg.name.encode("utf-8")
        parts.append(struct.pack("<I", len(name)))
        parts.append(name)
        parts.append(struct.pack("<II", seg.rows, seg.cols))
    parts.append(params.values.astype("<f8").tobytes())
    return b"".join(parts)


def params_from_bytes(data: bytes) -> ParamVector:
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a parameter checkpoint payload")
    pos = 4
    n_segs, = struct.unpack_from("<I", data, pos)
    pos += 4
    segments = []
    for _ in range(n_segs):
        name_len, = struct.unpack_from("<I", data, pos)
        pos += 4
        name = data[pos:pos + name_len].decode("utf-8")
        pos += name_len
        rows, cols = struct.unpack_from("<II", data, pos)
        pos += 8
        segments.append(ParamSegment(name, rows, cols))
    layout = ParamLayout(tuple(segments))
    if len(data) - pos < 8 * layout.total_size:
        raise ValueError("checkpoint payload shorter than its segment table")
    values = np.frombuffer(data, dtype="<f8", offset=pos,
                           count=layout.total_size)
    return ParamVector(layout, values.copy())


def save_checkpoint(params: ParamVector, path) -> None:
    with open(path, "wb") as f:
        f.write(params_to_bytes(params))


def load_checkpoint(path) -> ParamVector:
    with open(path, "rb") as f:
        return params_from_bytes(f.read())
