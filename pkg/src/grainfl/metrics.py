"""Privacy, efficiency, utility and composite metrics.

privacy_score: S_p = 1 - 1 / (1 + MSE) between the true image and the
attacker's reconstruction. communication_efficiency: CE = 2 sigmoid(-phi *
time / traffic). The composite score is the reciprocal of the summed
reciprocals of accuracy, CE and S_p — one third of a conventional harmonic
mean, implemented exactly in that printed form.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .datasets import Image

DEFAULT_PHI = 3e6


@dataclass(frozen=True)
class MetricConfig:
    """phi scales seconds-per-parameter into the sigmoid's working range."""

    phi: float = DEFAULT_PHI
    upload_only_traffic: bool = False  # count uploads instead of both directions

    def __post_init__(self):
        if self.phi <= 0.0:
            raise ValueError("phi must be > 0")


def mse(img_a: Image, img_b: Image) -> float:
    """Mean squared pixel difference."""
    if (img_a.width, img_a.height) != (img_b.width, img_b.height):
        raise ValueError("image dimensions differ")
    diff = img_a.pixels - img_b.pixels
    return float(np.mean(diff * diff))


def privacy_score(img_true: Image, img_pred: Image) -> float:
    """1 - 1/(1 + MSE); 0 means perfect reconstruction, towards 1 none."""
    return 1.0 - 1.0 / (1.0 + mse(img_true, img_pred))


def communication_efficiency(time_seconds: float, traffic: float,
                             phi: float = DEFAULT_PHI) -> float:
    """2 sigmoid(-phi * time / traffic), in (0, 1] with 1 iff time is 0."""
    if traffic <= 0:
        raise ValueError("traffic must be > 0")
    if time_seconds < 0:
        raise ValueError("time must be >= 0")
    e = math.exp(-phi * time_seconds / traffic)  # in (0, 1], never overflows
    return 2.0 * e / (1.0 + e)


def peum(acc: float, ce: float, s_p: float) -> float:
    """Composite score 1 / (1/acc + 1/ce + 1/s_p); 0 if any input is 0.

    A zero input makes the expression undefined; callers that need to
    distinguish that case should check `peum_defined` first.
    """
    if not peum_defined(acc, ce, s_p):
        return 0.0
    return 1.0 / (1.0 / acc + 1.0 / ce + 1.0 / s_p)


def peum_defined(acc: float, ce: float, s_p: float) -> bool:
    return acc > 0.0 and ce > 0.0 and s_p > 0.0


def accuracy(model, params, samples: Sequence[tuple[object, int]]) -> float:
    """Argmax-match fraction on (sample, label) pairs; argmax takes the
    lowest class index on ties."""
    if not samples:
        raise ValueError("empty evaluation set")
    correct = 0
    for x, label in samples:
        if int(np.argmax(model.logits(params, x))) == label:
            correct += 1
    return correct / len(samples)


@dataclass
class MetricReport:
    """Aggregated experiment metrics plus the raw inputs they came from."""

    accuracy: float
    s_p: float
    ce: float
    peum: float
    peum_defined: bool
    per_sample_s_p: list[float] = field(default_factory=list)
    round_seconds: list[float] = field(default_factory=list)
    round_traffic: list[int] = field(default_factory=list)
    phi: float = DEFAULT_PHI


def build_report(acc: float, per_sample_s_p: Sequence[float],
                 round_seconds: Sequence[float], round_traffic: Sequence[int],
                 config: MetricConfig | None = None) -> MetricReport:
    """Combine per-round efficiency inputs and per-sample privacy scores.

    CE uses the mean round time against the mean per-round traffic (the
    ratio equals totals/totals under full participation).
    """
    if config is None:
        config = MetricConfig()
    if not per_sample_s_p:
        raise ValueError("no privacy scores given")
    if not round_seconds or not round_traffic:
        raise ValueError("no round logs given")
    s_p = float(np.mean(per_sample_s_p))
    traffic = np.asarray(round_traffic, dtype=np.float64)
    if config.upload_only_traffic:
        traffic = traffic / 2.0
    ce = communication_efficiency(float(np.mean(round_seconds)),
                                  float(traffic.mean()), config.phi)
    return MetricReport(
        accuracy=acc, s_p=s_p, ce=ce, peum=peum(acc, ce, s_p),
        peum_defined=peum_defined(acc, ce, s_p),
        per_sample_s_p=list(per_sample_s_p),
        round_seconds=list(round_seconds),
        round_traffic=list(round_traffic),
        phi=config.phi)


def report_to_json(report: MetricReport) -> str:
    return json.dumps({
        "accuracy": report.accuracy,
        "s_p": report.s_p,
        "ce": report.ce,
        "peum": report.peum,
        "peum_defined": report.peum_defined,
        "phi": report.phi,
        "per_sample_s_p": report.per_sample_s_p,
    }, indent=2, sort_keys=True)


def write_report_csv(report: MetricReport, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["metric", "value"])
        writer.writerow(["accuracy", repr(report.accuracy)])
        writer.writerow(["s_p", repr(report.s_p)])
        writer.writerow(["ce", repr(report.ce)])
        writer.writerow(["peum", repr(report.peum)])
        writer.writerow(["peum_defined", int(report.peum_defined)])
        writer.writerow(["phi", repr(report.phi)])
