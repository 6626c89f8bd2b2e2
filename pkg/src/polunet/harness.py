"""Experiment orchestration: configs, presets, training loops, and reports.

Networks are described in the bracketed stack notation
``[count x filters x kernel]`` with ``FC`` and ``Softmax`` accepted as the
kernel token for dense layers; pooling positions and per-stack dropout
rates come from the preset (there is no universal rule for them). All
randomness in a run flows from one seed through named sub-streams (init,
shuffle, dropout, augment) so each component is reproducible on its own.
"""

from __future__ import annotations

import dataclasses
import math
import os
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import data as datamod
from . import netcore
from .activations import ActivationSpec, parse_activation_spec, saturation_value
from .jsonfmt import dumps as json_dumps
from .netcore import NetworkSpec

# named randomness sub-streams, combined with the run seed
_INIT, _SHUFFLE, _DROPOUT, _AUGMENT, _SUBSET = 0, 1, 2, 3, 4


class StackParseError(ValueError):
    """Stack-notation text that does not match the grammar; carries a position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (position {position})")
        self.position = position


# ---------------------------------------------------------------------------
# Stack notation
# ---------------------------------------------------------------------------

_ITEM_RE = re.compile(r"^\s*(\d+)\s*[x×]\s*(\d+)\s*[x×]\s*(\w+)\s*$")


def parse_stack_notation(text: str,
                         input_shape: Tuple[int, int, int],
                         activation: ActivationSpec,
                         pool_after: Sequence[int] = (),
                         dropout_rates: Optional[Sequence[float]] = None,
                         weight_decay: float = 0.0,
                         final_softmax: bool = False) -> NetworkSpec:
    """Expand stack notation into a concrete layer list.

    Counts repeat layers; every conv/dense gets an activation layer except
    the softmax output (and, with final_softmax, the last conv, which feeds
    the classifier head directly). pool_after lists 1-based stack indices
    that end in a 2x2/stride-2 max pool; dropout_rates, when given, aligns
    with stacks and inserts a dropout layer after each stack's last
    activation (zero rates are skipped).
    """
    stacks: List[List[Tuple[int, int, object]]] = []
    i, n = 0, len(text)
    while True:
        while i < n and text[i] in " ,\t\n":
            i += 1
        if i >= n:
            break
        if text[i] != "[":
            raise StackParseError(f"expected '[' but found {text[i]!r}", i)
        close = text.find("]", i)
        if close < 0:
            raise StackParseError("unclosed '['", i)
        items: List[Tuple[int, int, object]] = []
        offset = i + 1
        for part in text[i + 1:close].split(","):
            m = _ITEM_RE.match(part)
            if not m:
                raise StackParseError(f"malformed stack item {part.strip()!r}", offset)
            count, size = int(m.group(1)), int(m.group(2))
            token = m.group(3)
            if count < 1 or size < 1:
                raise StackParseError(f"counts and sizes must be positive in {part.strip()!r}",
                                      offset)
            if token.isdigit():
                kernel: object = int(token)
                if kernel < 1:
                    raise StackParseError(f"kernel must be positive in {part.strip()!r}", offset)
            elif token.lower() == "fc":
                kernel = "fc"
            elif token.lower() == "softmax":
                kernel = "softmax"
            else:
                raise StackParseError(f"bad kernel token {token!r}",
                                      offset + part.find(token))
            items.append((count, size, kernel))
            offset += len(part) + 1
        stacks.append(items)
        i = close + 1
    if not stacks:
        raise StackParseError("no stacks found", 0)
    if dropout_rates is not None and len(dropout_rates) != len(stacks):
        raise ValueError(
            f"{len(dropout_rates)} dropout rates for {len(stacks)} stacks"
        )

    pool_set = set(int(p) for p in pool_after)
    layers: List[netcore.LayerSpec] = []
    spatial = True
    for s_idx, items in enumerate(stacks, start=1):
        for count, size, kernel in items:
            for _ in range(count):
                if kernel in ("fc", "softmax"):
                    if spatial:
                        layers.append(netcore.flatten())
                        spatial = False
                    layers.append(netcore.dense(size))
                    if kernel == "fc":
                        layers.append(netcore.activation(activation))
                    else:
                        layers.append(netcore.softmax())
                else:
                    if not spatial:
                        raise StackParseError("convolution after a dense layer", 0)
                    layers.append(netcore.conv(size, int(kernel)))
                    layers.append(netcore.activation(activation))
        if dropout_rates is not None and dropout_rates[s_idx - 1] > 0:
            layers.append(netcore.dropout(float(dropout_rates[s_idx - 1])))
        if s_idx in pool_set:
            layers.append(netcore.maxpool())
    if final_softmax:
        if layers and layers[-1].kind == "activation":
            layers.pop()
        if spatial:
            layers.append(netcore.flatten())
        layers.append(netcore.softmax())
    spec = NetworkSpec(input_shape=input_shape, layers=tuple(layers),
                       weight_decay=weight_decay)
    spec.param_shapes()  # validates the shape chain
    return spec


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Preprocessing:
    gcn: bool = False
    zca: bool = False
    augment: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    dataset: str  # mnist | cifar10 | cifar100
    network: NetworkSpec
    activation: ActivationSpec
    epochs: int
    batch_size: int
    lr_schedule: Tuple[Tuple[int, float], ...]
    weight_decay: float
    momentum: float
    seeds: Tuple[int, ...]
    preprocessing: Preprocessing = Preprocessing()
    train_subset: Optional[int] = None
    test_subset: Optional[int] = None

    def __post_init__(self):
        if self.dataset not in ("mnist", "cifar10", "cifar100"):
            raise ValueError(f"unknown dataset {self.dataset!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch size positive")
        sched = tuple((int(e), float(r)) for e, r in self.lr_schedule)
        object.__setattr__(self, "lr_schedule", sched)
        if not sched or sched[0][0] != 1:
            raise ValueError("lr schedule must start at epoch 1")
        starts = [e for e, _ in sched]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("lr schedule epochs must be strictly increasing")
        if any(r <= 0 for _, r in sched):
            raise ValueError("learning rates must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def with_activation(self, act: ActivationSpec) -> "ExperimentConfig":
        layers = tuple(
            netcore.activation(act) if l.kind == "activation" else l
            for l in self.network.layers
        )
        network = NetworkSpec(self.network.input_shape, layers, self.network.weight_decay)
        return dataclasses.replace(self, activation=act, network=network)

    def with_seeds(self, seeds: Sequence[int]) -> "ExperimentConfig":
        return dataclasses.replace(self, seeds=tuple(int(s) for s in seeds))

    def reduced(self) -> "ExperimentConfig":
        """Trend-check variant: at most 30 epochs on a 10k train / 2k test subset."""
        return dataclasses.replace(
            self, epochs=min(self.epochs, 30), train_subset=10_000, test_subset=2_000,
        )


def lr_for_epoch(schedule: Sequence[Tuple[int, float]], epoch: int) -> float:
    """Step-function lookup: the rate of the last entry whose start is <= epoch."""
    if epoch < 1:
        raise ValueError(f"epochs are 1-based, got {epoch}")
    rate = schedule[0][1]
    for start, value in schedule:
        if epoch >= start:
            rate = value
    return rate


MNIST_STACK = "[1x32x3],[1x64x3],[1x128xFC],[1x10xSoftmax]"
SIMPLE_ELU_STACK = ("[1x192x5],[1x192x1,1x240x3],[1x240x1,1x260x2],"
                    "[1x260x1,1x280x2],[1x280x1,1x300x2],[1x300x1],[1x100x1]")

PRESETS = ("mnist_2c2d", "simple_elu_net")


def preset(name: str) -> ExperimentConfig:
    """Built-in experiment configurations.

    mnist_2c2d: two conv + two dense stacks with one pool after the second
    conv stack and 0.5 dropout before the final dense layer. The optimizer
    settings (batch 128, constant lr 0.01, momentum 0.9, 15 epochs) are
    chosen so the net settles into its expected test-error band at desk
    scale.

    simple_elu_net: the 11-convolution all-convolutional stack for CIFAR,
    pools after the first five stacks, per-stack dropout
    (0, .1, .2, .3, .4, .5, 0), weight decay 5e-4, momentum 0.9, and a step
    schedule 0.01 (epochs 1-70), 0.005 (71-140), then a tenth of the
    previous rate every 70 epochs, over 300 epochs.
    """
    if name == "mnist_2c2d":
        act = ActivationSpec("relu")
        network = parse_stack_notation(
            MNIST_STACK, input_shape=(28, 28, 1), activation=act,
            pool_after=(2,), dropout_rates=(0.0, 0.0, 0.5, 0.0),
        )
        return ExperimentConfig(
            name=name, dataset="mnist", network=network, activation=act,
            epochs=15, batch_size=128, lr_schedule=((1, 0.01),),
            weight_decay=0.0, momentum=0.9, seeds=(1, 2, 3),
            preprocessing=Preprocessing(),
        )
    if name == "simple_elu_net":
        act = ActivationSpec("elu", alpha=1.0)
        network = parse_stack_notation(
            SIMPLE_ELU_STACK, input_shape=(32, 32, 3), activation=act,
            pool_after=(1, 2, 3, 4, 5),
            dropout_rates=(0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.0),
            weight_decay=5e-4, final_softmax=True,
        )
        return ExperimentConfig(
            name=name, dataset="cifar100", network=network, activation=act,
            epochs=300, batch_size=100,
            lr_schedule=((1, 0.01), (71, 0.005), (141, 0.0005), (211, 0.00005)),
            weight_decay=5e-4, momentum=0.9, seeds=(1, 2, 3, 4, 5),
            preprocessing=Preprocessing(gcn=True, zca=True, augment=True),
        )
    raise KeyError(f"unknown preset {name!r} (have {', '.join(PRESETS)})")


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    test_error_pct: float
    mean_activations: Tuple[float, ...]


@dataclass
class RunMetrics:
    seed: int
    epochs: List[EpochMetrics]
    wall_time_s: float
    diverged: bool = False

    def final_test_error(self) -> float:
        return self.epochs[-1].test_error_pct if self.epochs else math.nan

    def final_train_loss(self) -> float:
        return self.epochs[-1].train_loss if self.epochs else math.nan


def load_datasets(config: ExperimentConfig, data_dir=None):
    base = Path(data_dir) if data_dir else datamod.default_data_dir() / config.dataset
    if config.dataset == "mnist":
        return datamod.load_mnist(base)
    variant = "c10" if config.dataset == "cifar10" else "c100"
    return datamod.load_cifar(base, variant)


def _subset(images: np.ndarray, labels: np.ndarray, size: Optional[int], seed_tag: int):
    if size is None or size >= len(images):
        return images, labels
    rng = np.random.default_rng([seed_tag, _SUBSET])
    pick = np.sort(rng.choice(len(images), size, replace=False))
    return images[pick], labels[pick]


def _prepare(config: ExperimentConfig, train: datamod.Dataset, test: datamod.Dataset):
    train_x, train_y = _subset(train.images, train.labels, config.train_subset, 0)
    test_x, test_y = _subset(test.images, test.labels, config.test_subset, 1)
    if config.preprocessing.gcn:
        train_x = datamod.global_contrast_normalize(train_x)
        test_x = datamod.global_contrast_normalize(test_x)
    if config.preprocessing.zca:
        transform = datamod.zca_fit(train_x)
        train_x = datamod.zca_apply(transform, train_x)
        test_x = datamod.zca_apply(transform, test_x)
    return train_x, train_y, test_x, test_y


def evaluate_error(spec: NetworkSpec, params, images, labels,
                   batch_size: int = 512) -> float:
    """Top-1 misclassification percentage, evaluated without dropout."""
    wrong = 0
    for start in range(0, len(images), batch_size):
        xb = images[start:start + batch_size]
        yb = labels[start:start + batch_size]
        out, _ = netcore.forward(spec, params, xb, mode="infer")
        wrong += int((out.argmax(axis=1) != yb).sum())
    return 100.0 * wrong / len(images)


def _metrics_header(act_layers: int) -> str:
    cols = ["epoch", "seed", "train_loss", "test_error_pct"]
    cols += [f"mean_act_layer_{i}" for i in range(act_layers)]
    return ",".join(cols)


def _metrics_row(seed: int, em: EpochMetrics) -> str:
    cells = [str(em.epoch), str(seed), f"{em.train_loss:.9g}", f"{em.test_error_pct:.9g}"]
    cells += [f"{v:.9g}" for v in em.mean_activations]
    return ",".join(cells)


def run(config: ExperimentConfig, datasets=None, data_dir=None,
        out_dir=None, verbose: bool = False) -> List[RunMetrics]:
    """Train once per seed and collect per-epoch metrics.

    datasets may be a preloaded (train, test) pair; otherwise the
    configured dataset is loaded from data_dir (or the default cache).
    When out_dir is given, every finished epoch appends one CSV row so a
    crash loses at most the epoch in flight.
    """
    if datasets is None:
        train, test = load_datasets(config, data_dir)
    else:
        train, test = datasets
    train_x, train_y, test_x, test_y = _prepare(config, train, test)
    spec = config.network
    probe = train_x[:1024]
    n_act = len(spec.activation_layer_indices())

    live_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        live_path = out / "metrics.csv"
        live_path.write_text(_metrics_header(n_act) + "\n", encoding="utf-8")

    results: List[RunMetrics] = []
    for seed in config.seeds:
        t0 = time.time()
        params = netcore.init_parameters(spec, [seed, _INIT])
        state = netcore.make_sgd_state(params, lr_for_epoch(config.lr_schedule, 1),
                                       config.momentum)
        shuffle_rng = np.random.default_rng([seed, _SHUFFLE])
        epochs: List[EpochMetrics] = []
        diverged = False
        for epoch in range(1, config.epochs + 1):
            state.learning_rate = lr_for_epoch(config.lr_schedule, epoch)
            perm = shuffle_rng.permutation(len(train_x))
            losses: List[float] = []
            for step, start in enumerate(range(0, len(train_x), config.batch_size)):
                idx = perm[start:start + config.batch_size]
                xb, yb = train_x[idx], train_y[idx]
                if config.preprocessing.augment:
                    xb = datamod.augment(xb, [seed, _AUGMENT, epoch, step])
                loss, grads = netcore.loss_and_grads(
                    spec, params, xb, yb, seed=[seed, _DROPOUT, epoch, step]
                )
                if not math.isfinite(loss):
                    diverged = True
                    break
                losses.append(loss)
                netcore.sgd_step(params, grads, state)
            if diverged:
                break
            means: List[float] = []
            netcore.forward(spec, params, probe, mode="infer",
                            record_activation_means=means)
            em = EpochMetrics(
                epoch=epoch,
                train_loss=float(np.mean(losses)) if losses else math.nan,
                test_error_pct=evaluate_error(spec, params, test_x, test_y),
                mean_activations=tuple(means),
            )
            epochs.append(em)
            if live_path is not None:
                with open(live_path, "a", encoding="utf-8") as fh:
                    fh.write(_metrics_row(seed, em) + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            if verbose:
                print(f"[seed {seed}] epoch {epoch}: loss {em.train_loss:.4f} "
                      f"test error {em.test_error_pct:.2f}%", flush=True)
        results.append(RunMetrics(seed=seed, epochs=epochs,
                                  wall_time_s=time.time() - t0, diverged=diverged))
        if out_dir is not None:
            netcore.save_params(params, Path(out_dir) / f"params_seed{seed}.plnet")
            with open(Path(out_dir) / f"params_seed{seed}.plnet.json", "w",
                      encoding="utf-8") as fh:
                fh.write(json_dumps(netcore.spec_to_dict(spec)) + "\n")
    return results


# ---------------------------------------------------------------------------
# Aggregation and emission
# ---------------------------------------------------------------------------

def smoothed_series(values: Sequence[float], window: int = 5) -> List[float]:
    """Trailing moving average; defined from the first full window onward."""
    if window < 1:
        raise ValueError("window must be positive")
    vals = [float(v) for v in values]
    return [sum(vals[i - window + 1:i + 1]) / window
            for i in range(window - 1, len(vals))]


@dataclass(frozen=True)
class Summary:
    mean: float
    std: float
    count: int
    final_errors: Tuple[float, ...]


def aggregate(runs: Sequence[RunMetrics]) -> Summary:
    """Mean and sample standard deviation (n-1) of final test errors."""
    finals = [r.final_test_error() for r in runs if r.epochs]
    if not finals:
        raise ValueError("no finished runs to aggregate")
    mean = sum(finals) / len(finals)
    if len(finals) > 1:
        var = sum((v - mean) ** 2 for v in finals) / (len(finals) - 1)
        std = math.sqrt(var)
    else:
        std = 0.0
    return Summary(mean=mean, std=std, count=len(finals),
                   final_errors=tuple(finals))


def write_metrics_csv(runs: Sequence[RunMetrics], path, act_layers: int) -> None:
    lines = [_metrics_header(act_layers)]
    for rm in runs:
        for em in rm.epochs:
            lines.append(_metrics_row(rm.seed, em))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def summary_dict(config: ExperimentConfig, runs: Sequence[RunMetrics]) -> dict:
    agg = aggregate(runs) if any(r.epochs for r in runs) else None
    return {
        "name": config.name,
        "dataset": config.dataset,
        "activation": config.activation.label(),
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "seeds": list(config.seeds),
        "final_errors": list(agg.final_errors) if agg else [],
        "mean_final_error": agg.mean if agg else None,
        "std_final_error": agg.std if agg else None,
        "wall_time_s": [r.wall_time_s for r in runs],
        "diverged": [r.diverged for r in runs],
    }


def write_summary_json(config: ExperimentConfig, runs: Sequence[RunMetrics], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json_dumps(summary_dict(config, runs), digits=9) + "\n")


def emit(config: ExperimentConfig, runs: Sequence[RunMetrics], out_dir) -> List[Path]:
    """Write the canonical per-epoch CSV and the summary JSON; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "metrics.csv"
    write_metrics_csv(runs, csv_path, len(config.network.activation_layer_indices()))
    json_path = out / "summary.json"
    write_summary_json(config, runs, json_path)
    return [csv_path, json_path]


# ---------------------------------------------------------------------------
# ELU alpha sweep
# ---------------------------------------------------------------------------

def elu_alpha_sweep(base: ExperimentConfig, alphas: Sequence[float] = (0.5, 1.0, 2.0),
                    datasets=None, data_dir=None, verbose: bool = False) -> dict:
    """Run the base ELU config once per alpha and join the per-epoch errors.

    Returns a report dict with one test-error column per alpha, per-seed
    final errors, and each alpha's saturation value as metadata.
    """
    if base.activation.kind != "elu":
        raise ValueError("alpha sweep requires a base config that uses elu")
    columns: Dict[str, List[float]] = {}
    finals: Dict[str, List[float]] = {}
    saturation: Dict[str, float] = {}
    depth = 0
    for alpha in alphas:
        label = f"{alpha:g}"
        cfg = base.with_activation(ActivationSpec("elu", alpha=float(alpha)))
        runs = run(cfg, datasets=datasets, data_dir=data_dir, verbose=verbose)
        per_epoch = [
            float(np.mean([r.epochs[e].test_error_pct for r in runs if len(r.epochs) > e]))
            for e in range(max((len(r.epochs) for r in runs), default=0))
        ]
        columns[label] = per_epoch
        finals[label] = [r.final_test_error() for r in runs if r.epochs]
        saturation[label] = saturation_value(ActivationSpec("elu", alpha=float(alpha)))
        depth = max(depth, len(per_epoch))
    return {
        "alphas": [f"{a:g}" for a in alphas],
        "saturation": saturation,
        "epochs": depth,
        "test_error_pct": columns,
        "final_errors": finals,
    }


def write_alpha_sweep_csv(report: dict, path) -> None:
    labels = report["alphas"]
    lines = ["epoch," + ",".join(f"test_error_pct_alpha_{a}" for a in labels)]
    for e in range(report["epochs"]):
        cells = [str(e + 1)]
        for a in labels:
            col = report["test_error_pct"][a]
            cells.append(f"{col[e]:.9g}" if e < len(col) else "")
        lines.append(",".join(cells))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from the JSON layout; may start from a named preset."""
    cfg = preset(raw["preset"]) if "preset" in raw else None
    if cfg is None:
        required = {"dataset", "network", "activation", "epochs", "batch_size",
                    "lr_schedule", "seeds"}
        missing = required - raw.keys()
        if missing:
            raise ValueError(f"config missing fields: {sorted(missing)}")

    if "activation" in raw:
        act = parse_activation_spec(raw["activation"])
    elif cfg is not None:
        act = cfg.activation
    network = None
    wd = float(raw.get("weight_decay", cfg.weight_decay if cfg else 0.0))
    if "network" in raw:
        net = raw["network"]
        network = parse_stack_notation(
            net["stack"],
            input_shape=tuple(net["input_shape"]),
            activation=act,
            pool_after=net.get("pool_after", ()),
            dropout_rates=net.get("dropout_rates"),
            weight_decay=wd,
            final_softmax=bool(net.get("final_softmax", False)),
        )
    elif cfg is not None:
        network = NetworkSpec(cfg.network.input_shape, cfg.network.layers, wd)

    prep_raw = raw.get("preprocessing",
                       dataclasses.asdict(cfg.preprocessing) if cfg else {})
    prep = Preprocessing(
        gcn=bool(prep_raw.get("gcn", False)),
        zca=bool(prep_raw.get("zca", False)),
        augment=bool(prep_raw.get("augment", False)),
    )
    built = ExperimentConfig(
        name=raw.get("name", cfg.name if cfg else "custom"),
        dataset=raw.get("dataset", cfg.dataset if cfg else None),
        network=network,
        activation=act,
        epochs=int(raw.get("epochs", cfg.epochs if cfg else 0)),
        batch_size=int(raw.get("batch_size", cfg.batch_size if cfg else 128)),
        lr_schedule=tuple(tuple(x) for x in raw.get(
            "lr_schedule", cfg.lr_schedule if cfg else ((1, 0.01),))),
        weight_decay=wd,
        momentum=float(raw.get("momentum", cfg.momentum if cfg else 0.0)),
        seeds=tuple(raw.get("seeds", cfg.seeds if cfg else (1,))),
        preprocessing=prep,
        train_subset=raw.get("train_subset"),
        test_subset=raw.get("test_subset"),
    )
    return built.with_activation(act)
