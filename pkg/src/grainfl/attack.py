"""Gradient-inversion reconstruction attacks.

The attacker observes model parameters and one sample's parameter gradient
and optimizes a candidate input so that its gradient matches the observed
one (squared L2 objective), using L-BFGS. Both pipelines are covered: the
pixel baseline recovers a flattened image; the graph attack knows the
topology and the position/size feature columns and recovers only the four
value columns, which are then rendered back into an image for scoring.

The gradient of the matching loss with respect to the candidate is exact:
a hand-written reverse pass through the model's own gradient computation
(ReLU masks are treated as locally constant, as in any subgradient method).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import Image
from .graphs import (COL_MEAN, GranularGraph, POSITION_COLUMNS, VALUE_COLUMNS,
                     FEATURE_DIM)
from .lbfgs import lbfgs_minimize
from .metrics import mse, privacy_score
from .nn import (GCNModel, MLPModel, ParamVector, normalized_adjacency,
                 softmax)

UNCOVERED_FILL = 0.5


@dataclass(frozen=True)
class AttackConfig:
    iterations: int = 300
    history: int = 10
    alpha: float = 1.0     # initial line-search step
    init_seed: int = 0     # dummy-candidate init ~ uniform[0, 1]

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.history < 1:
            raise ValueError("history must be >= 1")


@dataclass(frozen=True)
class AttackObservation:
    """What the attacker sees for one training sample.

    For the graph pipeline the topology and the position/size columns of
    the node features are included: the strongest reasonable attacker is
    granted everything except the pixel-value statistics.
    """

    params: ParamVector
    gradient: ParamVector
    label: int
    width: int
    height: int
    adjacency: np.ndarray | None = None
    position_features: np.ndarray | None = None  # (k, 4): c_x, c_y, r_x, r_y

    def __post_init__(self):
        if self.params.layout != self.gradient.layout:
            raise ValueError("gradient layout does not match parameter layout")


@dataclass
class ReconstructionResult:
    image: Image
    loss_trace: list[float] = field(default_factory=list)
    final_loss: float = float("inf")
    final_mse: float = float("nan")
    s_p: float = float("nan")


def observe_pixel_gradient(model: MLPModel, params: ParamVector,
                           image: Image, label: int) -> AttackObservation:
    _, grad = model.loss_and_grad(params, image, label)
    return AttackObservation(params, grad, label, image.width, image.height)


def observe_graph_gradient(model: GCNModel, params: ParamVector,
                           graph: GranularGraph) -> AttackObservation:
    _, grad = model.loss_and_grad(params, graph, graph.label)
    return AttackObservation(
        params, grad, graph.label, graph.source_width, graph.source_height,
        adjacency=graph.adjacency,
        position_features=graph.node_features[:, list(POSITION_COLUMNS)].copy())


def gradient_match_loss(candidate: np.ndarray, observation: AttackObservation,
                        model_kind: str) -> tuple[float, np.ndarray]:
    """Squared L2 distance between the candidate's gradient and the observed
    one, plus its exact gradient with respect to the candidate.

    For "mlp" the candidate is a flat pixel vector; for "gcn" it is the
    full (k, 8) node-feature matrix (the caller decides which entries to
    actually optimize).
    """
    w1 = observation.params.view("w1")
    w2 = observation.params.view("w2")
    g1 = observation.gradient.view("w1")
    g2 = observation.gradient.view("w2")
    if model_kind == "mlp":
        return _mlp_match_loss_grad(
            np.asarray(candidate, dtype=np.float64).reshape(-1),
            observation.label, w1, w2, g1, g2)
    if model_kind == "gcn":
        if observation.adjacency is None:
            raise ValueError("graph observation lacks the adjacency matrix")
        a_hat = normalized_adjacency(observation.adjacency)
        return _gcn_match_loss_grad(
            np.asarray(candidate, dtype=np.float64), a_hat,
            observation.label, w1, w2, g1, g2)
    raise ValueError(f"unknown model kind {model_kind!r}")


def _mlp_match_loss_grad(x, label, w1, w2, g1, g2):
    # forward and the per-sample parameter gradient
    z1 = x @ w1
    mask = z1 > 0.0
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ w2
    p = softmax(z2)
    dz2 = p.copy()
    dz2[label] -= 1.0
    dw2 = np.outer(a1, dz2)
    da1 = w2 @ dz2
    dz1 = da1 * mask
    dw1 = np.outer(x, dz1)
    r1 = dw1 - g1
    r2 = dw2 - g2
    loss = float((r1 * r1).sum() + (r2 * r2).sum())
    u1 = 2.0 * r1
    u2 = 2.0 * r2
    # reverse pass through the gradient computation
    b_x = u1 @ dz1                    # dw1 = outer(x, dz1)
    bd_z1 = x @ u1
    b_a1 = u2 @ dz2                   # dw2 = outer(a1, dz2)
    bd_z2 = a1 @ u2
    bd_a1 = bd_z1 * mask              # dz1 = da1 * mask
    bd_z2 = bd_z2 + w2.T @ bd_a1      # da1 = w2 @ dz2
    b_z2 = p * bd_z2 - p * (p @ bd_z2)  # dz2 = softmax(z2) - onehot
    b_a1 = b_a1 + w2 @ b_z2           # z2 = a1 @ w2
    b_z1 = b_a1 * mask                # a1 = relu(z1)
    b_x = b_x + w1 @ b_z1             # z1 = x @ w1
    return loss, b_x


def _gcn_match_loss_grad(features, a_hat, label, w1, w2, g1, g2):
    k = features.shape[0]
    mixed_x = a_hat @ features
    pre = mixed_x @ w1
    mask = pre > 0.0
    hidden = np.maximum(pre, 0.0)
    mixed_h = a_hat @ hidden
    logits = (mixed_h @ w2).mean(axis=0)
    p = softmax(logits)
    dz = p.copy()
    dz[label] -= 1.0
    d_pool = np.repeat(dz[None, :] / k, k, axis=0)
    dw2 = mixed_h.T @ d_pool
    d_mixed_h = d_pool @ w2.T
    d_hidden = a_hat @ d_mixed_h
    d_pre = d_hidden * mask
    dw1 = mixed_x.T @ d_pre
    r1 = dw1 - g1
    r2 = dw2 - g2
    loss = float((r1 * r1).sum() + (r2 * r2).sum())
    u1 = 2.0 * r1
    u2 = 2.0 * r2
    # reverse pass through the gradient computation
    b_mixed_x = d_pre @ u1.T              # dw1 = mixed_x.T @ d_pre
    bd_pre = mixed_x @ u1
    b_mixed_h = d_pool @ u2.T             # dw2 = mixed_h.T @ d_pool
    bd_pool = mixed_h @ u2
    bd_hidden = bd_pre * mask             # d_pre = d_hidden * mask
    bd_mixed_h = a_hat @ bd_hidden        # d_hidden = a_hat @ d_mixed_h
    bd_pool = bd_pool + bd_mixed_h @ w2   # d_mixed_h = d_pool @ w2.T
    bd_z = bd_pool.sum(axis=0) / k        # d_pool = ones dz^T / k
    b_logits = p * bd_z - p * (p @ bd_z)  # dz = softmax(logits) - onehot
    b_mixed_h = b_mixed_h + np.repeat(b_logits[None, :] / k, k, axis=0) @ w2.T
    b_hidden = a_hat @ b_mixed_h          # mixed_h = a_hat @ hidden
    b_pre = b_hidden * mask               # hidden = relu(pre)
    b_mixed_x = b_mixed_x + b_pre @ w1.T  # pre = mixed_x @ w1
    return loss, a_hat @ b_mixed_x        # mixed_x = a_hat @ features


def reconstruct_pixels(observation: AttackObservation, config: AttackConfig,
                       true_image: Image) -> ReconstructionResult:
    """DLG-style attack on the pixel pipeline; iterates clamped to [0, 1]."""
    dim = observation.width * observation.height
    init = np.random.default_rng(config.init_seed).random(dim)
    result = lbfgs_minimize(
        lambda x: gradient_match_loss(x, observation, "mlp"),
        init, max_iters=config.iterations, history=config.history,
        alpha=config.alpha, project=lambda v: np.clip(v, 0.0, 1.0))
    image = Image(observation.width, observation.height,
                  result.x.reshape(observation.height, observation.width))
    return _score(image, result, true_image)


def reconstruct_graph_features(observation: AttackObservation,
                               config: AttackConfig, true_image: Image,
                               init_values: np.ndarray | None = None
                               ) -> ReconstructionResult:
    """Attack on the graph pipeline.

    Position and size columns are fixed to their (attacker-known) true
    values; only the four value columns are optimized. The recovered
    features are rendered back to pixel space for scoring.
    """
    if observation.adjacency is None or observation.position_features is None:
        raise ValueError("graph attack needs adjacency and position features")
    k = observation.adjacency.shape[0]
    base = np.zeros((k, FEATURE_DIM))
    base[:, list(POSITION_COLUMNS)] = observation.position_features
    value_cols = list(VALUE_COLUMNS)

    def objective(v: np.ndarray) -> tuple[float, np.ndarray]:
        candidate = base.copy()
        candidate[:, value_cols] = v.reshape(k, len(value_cols))
        loss, d_feat = gradient_match_loss(candidate, observation, "gcn")
        return loss, d_feat[:, value_cols].reshape(-1)

    if init_values is None:
        init = np.random.default_rng(config.init_seed).random(k * len(value_cols))
    else:
        init = np.asarray(init_values, dtype=np.float64).reshape(-1)
    result = lbfgs_minimize(objective, init, max_iters=config.iterations,
                            history=config.history, alpha=config.alpha)
    recovered = base.copy()
    recovered[:, value_cols] = result.x.reshape(k, len(value_cols))
    image = render_rectangles(recovered, observation.width, observation.height)
    return _score(image, result, true_image)


def _score(image: Image, opt_result, true_image: Image) -> ReconstructionResult:
    return ReconstructionResult(
        image=image,
        loss_trace=[float(v) for v in opt_result.trace[1:]],
        final_loss=float(opt_result.fun),
        final_mse=mse(true_image, image),
        s_p=privacy_score(true_image, image))


def render_rectangles(features: np.ndarray, width: int, height: int) -> Image:
    """Paint each pixel with the average rectangle mean value covering it.

    Centers and radii are denormalized from the feature encoding; pixels no
    rectangle covers get the maximum-entropy fill 0.5, and the result is
    clamped to [0, 1] so that arbitrary attacker candidates still render to
    a valid image.
    """
    feats = np.asarray(features, dtype=np.float64)
    acc = np.zeros((height, width))
    count = np.zeros((height, width))
    for row in feats:
        cx = min(max(int(round(row[0] * width)), 0), width - 1)
        cy = min(max(int(round(row[1] * height)), 0), height - 1)
        rx = max(int(round(row[4] * width)), 0)
        ry = max(int(round(row[5] * height)), 0)
        x0, x1 = max(cx - rx, 0), min(cx + rx, width - 1)
        y0, y1 = max(cy - ry, 0), min(cy + ry, height - 1)
        acc[y0:y1 + 1, x0:x1 + 1] += row[COL_MEAN]
        count[y0:y1 + 1, x0:x1 + 1] += 1.0
    pixels = np.full((height, width), UNCOVERED_FILL)
    covered = count > 0
    pixels[covered] = acc[covered] / count[covered]
    return Image(width, height, np.clip(pixels, 0.0, 1.0))
