"""Command-line front door.

Subcommands: synth, granulate, train, attack, metrics, bench. Each run
writes its outputs (CSV, JSON, PGM, checkpoints, PNG figures) into one
directory together with a config snapshot, so every reported number can be
reproduced from the directory alone.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import figures
from .attack import (observe_graph_gradient, observe_pixel_gradient,
                     reconstruct_graph_features, reconstruct_pixels)
from .config import ConfigError, ExperimentConfig, build_config, config_to_text
from .datasets import LabeledDataset, load_cifar10, load_mnist, save_idx, write_pgm
from .federation import (graph_samples, image_samples, init_rng, make_model,
                         partition, run_federation)
from .granulation import granulate
from .graphs import build_graph, load_graphs, save_graphs
from .metrics import build_report, report_to_json, write_report_csv
from .nn import load_checkpoint, save_checkpoint
from .synth import make_digit_dataset


def _limited(dataset: LabeledDataset, limit: int) -> LabeledDataset:
    if limit and limit < len(dataset):
        return LabeledDataset(dataset.images[:limit], dataset.labels[:limit],
                              dataset.num_classes)
    return dataset


def _load_images(config: ExperimentConfig, images: str, labels: str,
                 limit: int) -> LabeledDataset:
    if config.cifar:
        return _limited(load_cifar10(config.cifar), limit)
    if not images or not labels:
        raise ConfigError("an IDX image/label file pair is required")
    return _limited(load_mnist(images, labels), limit)


def _require(path: str, what: str) -> str:
    if not path:
        raise ConfigError(f"{what} is required")
    if not Path(path).exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(config: ExperimentConfig, outdir: Path) -> int:
    train = make_digit_dataset(config.train_count, config.seed)
    test = make_digit_dataset(config.test_count, config.seed + 1)
    save_idx(train, outdir / "train-images.idx", outdir / "train-labels.idx")
    save_idx(test, outdir / "test-images.idx", outdir / "test-labels.idx")
    print(f"wrote {len(train)} train / {len(test)} test digit images to {outdir}")
    return 0


def cmd_granulate(config: ExperimentConfig, outdir: Path) -> int:
    if not config.cifar:
        _require(config.images, "--images")
        _require(config.labels, "--labels")
    else:
        _require(config.cifar, "--cifar")
    dataset = _load_images(config, config.images, config.labels, config.limit)
    if not len(dataset):
        raise ConfigError("the dataset is empty")
    gran_cfg = config.granulation()
    graphs = []
    total_nodes = 0
    total_edges = 0
    total_pixels = 0
    started = time.perf_counter()
    for img, label in zip(dataset.images, dataset.labels):
        rects = granulate(img, gran_cfg)
        graph = build_graph(rects, img.width, img.height, int(label))
        graphs.append(graph)
        total_nodes += graph.num_nodes
        total_edges += graph.num_edges
        total_pixels += img.width * img.height
    elapsed = time.perf_counter() - started

    stem = Path(config.cifar or config.images).stem
    graphs_path = outdir / f"{stem}.graphs.json"
    save_graphs(graphs, graphs_path)
    summary = {
        "images": len(graphs),
        "nodes": total_nodes,
        "edges": total_edges,
        "mean_nodes_per_graph": total_nodes / len(graphs),
        "compression_ratio": total_nodes / total_pixels,
        "seconds": elapsed,
    }
    with open(outdir / f"{stem}.summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    print(f"granulated {len(graphs)} images -> {graphs_path}")
    print(f"nodes {total_nodes} edges {total_edges} "
          f"compression {summary['compression_ratio']:.4f} "
          f"({elapsed:.1f} s)")
    return 0


def _load_training_samples(config: ExperimentConfig):
    """Returns (model, train samples, test samples)."""
    if config.model == "gcn":
        train_graphs = load_graphs(_require(config.graphs, "--graphs"))
        test_graphs = load_graphs(_require(config.test_graphs, "--test-graphs"))
        train = graph_samples(train_graphs)
        test = graph_samples(test_graphs)
        num_classes = max(max(y for _, y in train), max(y for _, y in test)) + 1
        model = make_model("gcn", config.hidden, max(num_classes, 2))
    else:
        train_ds = _load_images(config, _require(config.images, "--images"),
                                _require(config.labels, "--labels"), config.limit)
        test_ds = _load_images(config, _require(config.test_images, "--test-images"),
                               _require(config.test_labels, "--test-labels"),
                               config.test_limit)
        train = image_samples(train_ds)
        test = image_samples(test_ds)
        first = train_ds.images[0]
        model = make_model("mlp", config.hidden, train_ds.num_classes,
                           input_dim=first.width * first.height)
    return model, train, test


def cmd_train(config: ExperimentConfig, outdir: Path) -> int:
    model, train, test = _load_training_samples(config)
    fed_cfg = config.federation()
    shards = partition(train, fed_cfg.num_clients, fed_cfg.seed)
    params, logs = run_federation(model, shards, test, fed_cfg)

    with open(outdir / "rounds.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["round", "seconds", "params_transferred", "accuracy"])
        for log in logs:
            writer.writerow([log.round_index, repr(log.wall_clock_seconds),
                             log.params_transferred, repr(log.global_accuracy)])
    save_checkpoint(params, outdir / "checkpoint.bin")
    if config.figures:
        figures.save_rounds_figure(
            [log.round_index for log in logs],
            [log.global_accuracy for log in logs],
            [log.wall_clock_seconds for log in logs],
            outdir / "rounds.png")
    print(f"trained {fed_cfg.rounds} rounds, "
          f"final accuracy {logs[-1].global_accuracy:.4f}")
    return 0


def cmd_attack(config: ExperimentConfig, outdir: Path) -> int:
    attack_cfg = config.attack()
    dataset = _load_images(config, _require(config.images, "--images"),
                           _require(config.labels, "--labels"), config.limit)
    n = min(config.samples, len(dataset))
    picks = np.random.default_rng([config.seed, 2]).choice(
        len(dataset), size=n, replace=False)

    if config.model == "gcn":
        graphs = load_graphs(_require(config.graphs, "--graphs"))
        if len(graphs) != len(dataset):
            raise ConfigError("graphs file and image dataset differ in length")
        model = make_model("gcn", config.hidden, dataset.num_classes)
    else:
        first = dataset.images[0]
        model = make_model("mlp", config.hidden, dataset.num_classes,
                           input_dim=first.width * first.height)
    if config.checkpoint:
        params = load_checkpoint(_require(config.checkpoint, "--checkpoint"))
    else:
        params = model.init_params(init_rng(config.seed))

    pgm_dir = outdir / "reconstructions"
    pgm_dir.mkdir(exist_ok=True)
    rows = []
    traces = []
    for idx in sorted(int(i) for i in picks):
        image = dataset.images[idx]
        label = int(dataset.labels[idx])
        if config.model == "gcn":
            obs = observe_graph_gradient(model, params, graphs[idx])
            result = reconstruct_graph_features(obs, attack_cfg, image)
        else:
            obs = observe_pixel_gradient(model, params, image, label)
            result = reconstruct_pixels(obs, attack_cfg, image)
        write_pgm(result.image, pgm_dir / f"recon_{idx:05d}.pgm")
        write_pgm(image, pgm_dir / f"true_{idx:05d}.pgm")
        rows.append((idx, label, result.final_loss, result.final_mse, result.s_p))
        traces.append(result.loss_trace)

    with open(outdir / "sp.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample", "label", "final_loss", "mse", "s_p"])
        for idx, label, loss, m, sp in rows:
            writer.writerow([idx, label, repr(loss), repr(m), repr(sp)])
    with open(outdir / "loss_traces.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sample", "iteration", "loss"])
        for (idx, *_), trace in zip(rows, traces):
            for it, loss in enumerate(trace, start=1):
                writer.writerow([idx, it, repr(loss)])
    if config.figures:
        figures.save_attack_figure(traces, [r[4] for r in rows],
                                   outdir / "attack_sp.png")
    mean_sp = float(np.mean([r[4] for r in rows]))
    mean_mse = float(np.mean([r[3] for r in rows]))
    print(f"attacked {len(rows)} samples ({config.model}): "
          f"mean MSE {mean_mse:.4g}, mean S_p {mean_sp:.4g}")
    return 0


def cmd_metrics(config: ExperimentConfig, outdir: Path) -> int:
    rounds_path = Path(_require(str(outdir / "rounds.csv"), "rounds.csv"))
    sp_path = Path(_require(str(outdir / "sp.csv"), "sp.csv"))
    seconds, traffic, acc = [], [], 0.0
    with open(rounds_path, newline="") as f:
        for row in csv.DictReader(f):
            seconds.append(float(row["seconds"]))
            traffic.append(int(row["params_transferred"]))
            acc = float(row["accuracy"])
    sp_values = []
    with open(sp_path, newline="") as f:
        for row in csv.DictReader(f):
            sp_values.append(float(row["s_p"]))
    report = build_report(acc, sp_values, seconds, traffic, config.metric())
    with open(outdir / "report.json", "w") as f:
        f.write(report_to_json(report) + "\n")
    write_report_csv(report, outdir / "report.csv")
    if config.figures:
        figures.save_report_figure(report, outdir / "report.png")
    print(f"accuracy {report.accuracy:.4f}  CE {report.ce:.4f}  "
          f"S_p {report.s_p:.4g}  PEUM {report.peum:.4f}")
    return 0


def bench_image(side: int):
    """Deterministic smooth band pattern used for timing runs."""
    from .datasets import Image
    yy, xx = np.mgrid[0:side, 0:side]
    pixels = 0.5 + 0.45 * np.sin(xx / 23.0) * np.cos(yy / 19.0)
    return Image(side, side, pixels)


def cmd_bench(config: ExperimentConfig, outdir: Path) -> int:
    sizes = config.bench_sizes()
    gran_cfg = config.granulation()
    rows = []
    for side in sizes:
        image = bench_image(side)
        times = []
        n_rects = 0
        for _ in range(max(config.repeats, 1)):
            start = time.perf_counter()
            rects = granulate(image, gran_cfg)
            times.append((time.perf_counter() - start) * 1e3)
            n_rects = len(rects)
        rows.append((side, side * side, n_rects, min(times),
                     sum(times) / len(times)))
        print(f"{side:>5}x{side:<5} {n_rects:>6} rects  "
              f"best {min(times):8.2f} ms  mean {sum(times)/len(times):8.2f} ms")
    with open(outdir / "bench.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["side", "pixels", "rectangles", "ms_best", "ms_mean"])
        for row in rows:
            writer.writerow([row[0], row[1], row[2], repr(row[3]), repr(row[4])])
    if config.figures:
        figures.save_bench_figure([r[0] for r in rows], [r[3] for r in rows],
                                  outdir / "bench.png")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="key=value config file")
    sp.add_argument("--out", help="output directory (default: run)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--threads", type=int)
    sp.add_argument("--figures", action=argparse.BooleanOptionalAction,
                    default=None, help="render PNG figures next to CSV output")


def _add_granulation_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--gray-thr", type=float, dest="gray_thr")
    sp.add_argument("--purity-thr", type=float, dest="purity_thr")
    sp.add_argument("--var-thr", type=float, dest="var_thr")
    sp.add_argument("--symmetric-purity", action=argparse.BooleanOptionalAction,
                    default=None, dest="symmetric_purity")
    sp.add_argument("--axis-order", choices=("xy", "yx"), dest="axis_order")


def _add_data_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--images", help="IDX image file")
    sp.add_argument("--labels", help="IDX label file")
    sp.add_argument("--cifar", help="CIFAR-10 binary batch (instead of IDX)")
    sp.add_argument("--limit", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grainfl",
        description="granular-rectangle graph federated learning experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic digit dataset")
    _add_common(sp)
    sp.add_argument("--train-count", type=int, dest="train_count")
    sp.add_argument("--test-count", type=int, dest="test_count")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("granulate", help="turn images into granular graphs")
    _add_common(sp)
    _add_data_flags(sp)
    _add_granulation_flags(sp)
    sp.set_defaults(func=cmd_granulate)

    sp = sub.add_parser("train", help="federated training")
    _add_common(sp)
    _add_data_flags(sp)
    sp.add_argument("--test-images", dest="test_images")
    sp.add_argument("--test-labels", dest="test_labels")
    sp.add_argument("--test-limit", type=int, dest="test_limit")
    sp.add_argument("--graphs", help="granulated train shard (gcn model)")
    sp.add_argument("--test-graphs", dest="test_graphs")
    sp.add_argument("--model", choices=("gcn", "mlp"))
    sp.add_argument("--clients", type=int)
    sp.add_argument("--rounds", type=int)
    sp.add_argument("--local-epochs", type=int, dest="local_epochs")
    sp.add_argument("--batch-size", type=int, dest="batch_size")
    sp.add_argument("--lr", type=float)
    sp.add_argument("--mu", type=float)
    sp.add_argument("--hidden", type=int)
    sp.add_argument("--weighted-aggregate", action=argparse.BooleanOptionalAction,
                    default=None, dest="weighted_aggregate")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("attack", help="gradient-inversion reconstruction")
    _add_common(sp)
    _add_data_flags(sp)
    sp.add_argument("--graphs", help="granulated shard matching --images (gcn)")
    sp.add_argument("--model", choices=("gcn", "mlp"))
    sp.add_argument("--hidden", type=int)
    sp.add_argument("--checkpoint", help="attack this trained model")
    sp.add_argument("--samples", type=int)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--history", type=int)
    sp.add_argument("--alpha", type=float)
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("metrics", help="aggregate a run directory into a report")
    _add_common(sp)
    sp.add_argument("--phi", type=float)
    sp.add_argument("--upload-only-traffic", action=argparse.BooleanOptionalAction,
                    default=None, dest="upload_only_traffic")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("bench", help="granulation timing across image sizes")
    _add_common(sp)
    _add_granulation_flags(sp)
    sp.add_argument("--sizes", help="comma-separated image side lengths")
    sp.add_argument("--repeats", type=int)
    sp.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = build_config(getattr(args, "config", None), vars(args))
        outdir = Path(config.out)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "config.txt", "w") as f:
            f.write(config_to_text(config))
        return args.func(config, outdir)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
