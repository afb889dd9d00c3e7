"""Contrastive-divergence training of sparse Boltzmann networks.

Each weight update clamps a batch of images (positive phase), lets the
network run freely (negative phase) and moves J and h along the difference of
the two correlation estimates, with momentum.
"""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .data import Dataset
from .diagnostics import all_states, enumerate_boltzmann
from .graph import RoleAssignment, SparseGraph
from .model import BIPOLAR, Model, PrecisionSpec, energy_scale, save_model
from .sampler import CHROMATIC, SEQUENTIAL, ChainState, run_statistics

CD, PCD = "CD", "PCD"
DELTA = 1e-4


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 10
    n_batches: int = 10
    sweeps_per_image: int = 1000
    negative_sweeps: int | None = None      # None means sweeps_per_image * batch_size
    learning_rate: float = 0.003
    momentum: float = 0.6
    weight_decay: float = 0.0
    cd_mode: str = CD
    engine: str = SEQUENTIAL
    beta: float = 1.0
    master_seed: int = 0
    precision: str = "float64"
    eval_every: int = 10                    # epochs between accuracy evaluations (0 = never)
    eval_sweeps: int = 1000
    train_eval_size: int = 100
    test_eval_size: int = 100
    workers: int = 0                        # chromatic threads, 0 = numba default

    def __post_init__(self):
        for name in ("batch_size", "n_batches", "sweeps_per_image", "eval_sweeps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.negative_sweeps is not None and self.negative_sweeps < 1:
            raise ValueError("negative_sweeps must be positive")
        for name in ("epochs", "eval_every", "train_eval_size", "test_eval_size", "workers"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.cd_mode not in (CD, PCD):
            raise ValueError(f"cd_mode must be CD or PCD, not {self.cd_mode!r}")
        if self.engine not in (SEQUENTIAL, CHROMATIC):
            raise ValueError(f"unknown engine {self.engine!r}")
        PrecisionSpec.parse(self.precision)

    @property
    def n_negative(self) -> int:
        return self.negative_sweeps or self.sweeps_per_image * self.batch_size

    @property
    def precision_spec(self) -> PrecisionSpec:
        return PrecisionSpec.parse(self.precision)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name}={'' if v is None else v}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_mapping(cls, items: dict, base: "TrainConfig | None" = None) -> "TrainConfig":
        """Build from string or typed values; unknown keys raise ``KeyError``."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kw = {}
        for key, raw in items.items():
            if key not in types:
                raise KeyError(f"unknown config key {key!r}")
            kw[key] = _coerce(raw, types[key], key)
        return dataclasses.replace(base or cls(), **kw)

    @classmethod
    def load(cls, path) -> "TrainConfig":
        return cls.from_mapping(parse_key_values(Path(path).read_text()))


def parse_key_values(text: str) -> dict:
    """Flat ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce(raw, type_name: str, key: str):
    if not isinstance(raw, str):
        return raw
    try:
        if type_name.startswith("int"):
            return None if raw in ("", "None") and "None" in type_name else int(raw)
        if type_name == "float":
            return float(raw)
    except ValueError:
        raise ValueError(f"config key {key!r}: cannot parse {raw!r} as {type_name}") from None
    return raw


# --------------------------------------------------------------------------- accumulator

@dataclass
class GradientAccumulator:
    """Correlation sums of the current update plus the momentum memory."""

    corr_data: np.ndarray
    corr_model: np.ndarray
    mean_data: np.ndarray
    mean_model: np.ndarray
    prev_delta_J: np.ndarray
    prev_delta_h: np.ndarray

    @classmethod
    def zeros(cls, model: Model) -> "GradientAccumulator":
        e, n = model.graph.edge_count, model.graph.node_count
        return cls(np.zeros(e), np.zeros(e), np.zeros(n), np.zeros(n), np.zeros(e), np.zeros(n))

    def reset(self) -> None:
        for a in (self.corr_data, self.corr_model, self.mean_data, self.mean_model):
            a[:] = 0.0


# --------------------------------------------------------------------------- init

def bias_from_proportion(p, delta: float = DELTA) -> np.ndarray:
    """log(p / (1 - p)) after clipping p into [delta, 1 - delta]."""
    p = np.clip(np.asarray(p, dtype=np.float64), delta, 1.0 - delta)
    if np.any((p <= 0) | (p >= 1)) or not np.all(np.isfinite(p)):
        raise ValueError("on-proportions must lie in (0, 1) after clipping")
    return np.log(p / (1.0 - p))


def init_model(graph: SparseGraph, roles: RoleAssignment, pixel_stats, label_stats=None, seed: int = 0,
               precision: PrecisionSpec | str = "float64", delta: float = DELTA, sigma: float = 0.01) -> Model:
    """J ~ N(0, sigma^2), hidden biases 0, visible and label biases from on-proportions.

    ``label_stats`` are per-class frequencies (default uniform) and apply to
    every replica of a class.
    """
    if isinstance(precision, str):
        precision = PrecisionSpec.parse(precision)
    pixel_stats = np.asarray(pixel_stats, dtype=np.float64)
    if pixel_stats.shape != (len(roles.visible_ids),):
        raise ValueError(f"{pixel_stats.size} pixel statistics for {len(roles.visible_ids)} visible nodes")
    if label_stats is None:
        label_stats = np.full(roles.n_classes, 1.0 / roles.n_classes)
    rng = np.random.default_rng(seed)
    J = rng.normal(0.0, sigma, graph.edge_count)
    h = np.zeros(graph.node_count)
    h[roles.visible_ids] = bias_from_proportion(pixel_stats, delta)
    h[roles.label_ids] = np.tile(bias_from_proportion(label_stats, delta), roles.n_replicas)
    return Model.create(graph, J, h, precision)


def class_frequencies(labels, n_classes: int) -> np.ndarray:
    return np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_classes) / max(len(labels), 1)


# --------------------------------------------------------------------------- phases

def label_bits(roles: RoleAssignment, label: int) -> np.ndarray:
    """One-hot label replicated over every label set (0/1)."""
    bits = np.zeros((roles.n_replicas, roles.n_classes), dtype=np.int8)
    bits[:, int(label)] = 1
    return bits.ravel()


def _check_image(bits, n_vis: int) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.shape != (n_vis,):
        raise ValueError(f"image has {bits.size} pixels, visible layer has {n_vis}")
    if not np.all((bits == 0) | (bits == 1)):
        raise ValueError("training images must be binary (0/1)")
    return bits


def positive_phase(model: Model, roles: RoleAssignment, batch, config: TrainConfig,
                   state: ChainState | None = None, seed: int = 0):
    """Clamped statistics ``(corr_data, mean_data)`` over a batch of ``(image_bits, label)``.

    Every image is clamped in turn for ``sweeps_per_image`` sweeps and all
    sweeps are averaged (normalized by N x B). Hidden nodes carry their state
    from one image to the next.
    """
    if state is None:
        state = ChainState.new(model, seed, beta=config.beta)
    pair = np.zeros(model.graph.edge_count)
    node = np.zeros(model.graph.node_count)
    n_vis = len(roles.visible_ids)
    count = 0
    for image, label in batch:
        state.release()
        state.clamp(roles.visible_ids, _check_image(image, n_vis))
        if roles.n_classes:
            state.clamp(roles.label_ids, label_bits(roles, label))
        p, m = run_statistics(model, state, config.sweeps_per_image, config.engine, config.workers or None)
        pair += p
        node += m
        count += config.sweeps_per_image
    state.release()
    if count == 0:
        raise ValueError("empty batch")
    return pair / count, node / count


def negative_phase(model: Model, config: TrainConfig, persistent_state: ChainState | None = None,
                   seed: int = 0):
    """Free-running statistics ``(corr_model, mean_model, state)``.

    CD mode starts a uniformly random chain from ``seed``; PCD continues
    ``persistent_state`` (created from ``seed`` when absent).
    """
    if config.cd_mode == PCD and persistent_state is not None:
        state = persistent_state
        state.release()
    else:
        state = ChainState.new(model, seed, beta=config.beta)
    state.beta = config.beta
    n = config.n_negative
    pair, node = run_statistics(model, state, n, config.engine, config.workers or None)
    return pair / n, node / n, state


def apply_update(master_J: np.ndarray, master_h: np.ndarray, acc: GradientAccumulator,
                 config: TrainConfig):
    """Momentum step on the float64 master weights, in place; returns ``(dJ, dh)``.

    dX(n) = lr * (data - model - decay * X) + momentum * dX(n-1); the decay
    term applies to couplings only.
    """
    eps, alpha = config.learning_rate, config.momentum
    gJ = acc.corr_data - acc.corr_model
    if config.weight_decay > 0:
        gJ = gJ - config.weight_decay * master_J
    dJ = eps * gJ + alpha * acc.prev_delta_J
    dh = eps * (acc.mean_data - acc.mean_model) + alpha * acc.prev_delta_h
    master_J += dJ
    master_h += dh
    acc.prev_delta_J[:] = dJ
    acc.prev_delta_h[:] = dh
    return dJ, dh


# --------------------------------------------------------------------------- training loop

@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_acc: float
    test_acc: float
    mean_abs_dJ: float
    wallclock_s: float


@dataclass
class TrainResult:
    model: Model
    log: list = field(default_factory=list)
    updates: int = 0
    accumulator: GradientAccumulator | None = None
    persistent_state: ChainState | None = None


LOG_HEADER = ("epoch", "train_acc", "test_acc", "mean_abs_dJ", "wallclock_s")


def write_log(path, log) -> None:
    with open(path, "w") as f:
        f.write("\t".join(LOG_HEADER) + "\n")
        for r in log:
            f.write(f"{r.epoch}\t{r.train_acc!r}\t{r.test_acc!r}\t{r.mean_abs_dJ!r}\t{r.wallclock_s:.3f}\n")


def read_log(path) -> list[EpochRecord]:
    rows = [line.rstrip("\n").split("\t") for line in open(path)][1:]
    return [EpochRecord(int(r[0]), float(r[1]), float(r[2]), float(r[3]), float(r[4])) for r in rows if r[0]]


def _sub_seed(master: int, *tags: int) -> int:
    return int(np.random.SeedSequence([int(master), *tags]).generate_state(1, np.uint64)[0] >> 1)


def _eval_subset(ds: Dataset | None, size: int, seed: int):
    if ds is None or size == 0 or len(ds) == 0:
        return None
    if size >= len(ds):
        return ds
    return ds.take(np.sort(np.random.default_rng(seed).choice(len(ds), size, replace=False)))


def train(model: Model, roles: RoleAssignment, dataset: Dataset, config: TrainConfig,
          test_set: Dataset | None = None, callbacks: list[Callable] | None = None,
          out_dir=None) -> TrainResult:
    """Nested epoch/batch loop: positive phase, negative phase, momentum update.

    Each epoch draws ``n_batches`` batches of ``batch_size`` from a seeded
    shuffle, so the run makes ``epochs * n_batches`` updates. Accuracy is
    measured every ``eval_every`` epochs (and after the last) on seeded
    subsets; other epochs log NaN. ``callbacks(record, model)`` run after
    every epoch. With ``out_dir`` the model and metrics log are checkpointed
    each epoch.
    """
    from .tasks import accuracy

    if not dataset.is_binary():
        raise ValueError("training images must be binary; binarize the dataset first")
    if dataset.pixels != len(roles.visible_ids):
        raise ValueError(f"images have {dataset.pixels} pixels, visible layer has {len(roles.visible_ids)}")
    need = config.batch_size * config.n_batches
    if len(dataset) < need:
        raise ValueError(f"{need} images per epoch requested, dataset has {len(dataset)}")
    if model.representation != BIPOLAR:
        raise ValueError("training runs on bipolar models")
    spec = config.precision_spec
    model = model.with_params(precision=spec)
    master_J, master_h = model.J.astype(np.float64).copy(), model.h.astype(np.float64).copy()
    acc = GradientAccumulator.zeros(model)
    result = TrainResult(model, [], 0, acc)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        config.save(out / "trainer.cfg")
        save_model(model, out / "checkpoint.pbm")
        write_log(out / "metrics.tsv", [])

    train_eval = _eval_subset(dataset, config.train_eval_size, _sub_seed(config.master_seed, 7))
    test_eval = _eval_subset(test_set, config.test_eval_size, _sub_seed(config.master_seed, 8))
    pos_state = ChainState.new(model, _sub_seed(config.master_seed, 1), beta=config.beta)
    persistent = None
    t0 = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng(_sub_seed(config.master_seed, 2, epoch)).permutation(len(dataset))
        abs_dJ = []
        for b in range(config.n_batches):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            batch = [(dataset.images[i].astype(np.int8), dataset.labels[i]) for i in idx]
            acc.reset()
            acc.corr_data[:], acc.mean_data[:] = positive_phase(model, roles, batch, config, pos_state)
            acc.corr_model[:], acc.mean_model[:], state = negative_phase(
                model, config, persistent, _sub_seed(config.master_seed, 3, result.updates))
            if config.cd_mode == PCD:
                persistent = state
            dJ, _ = apply_update(master_J, master_h, acc, config)
            abs_dJ.append(float(np.abs(dJ).mean()) if len(dJ) else 0.0)
            model = model.with_params(master_J, master_h)
            result.updates += 1
        evaluate = config.eval_every and (epoch % config.eval_every == 0 or epoch == config.epochs)
        tr = te = float("nan")
        if evaluate:
            eval_seed = _sub_seed(config.master_seed, 4, epoch)
            if train_eval is not None:
                tr = accuracy(model, roles, (train_eval.images > 0.5).astype(np.int8), train_eval.labels,
                              config.eval_sweeps, eval_seed, config.engine, config.workers or None)
            if test_eval is not None:
                te = accuracy(model, roles, (test_eval.images > 0.5).astype(np.int8), test_eval.labels,
                              config.eval_sweeps, eval_seed + 1, config.engine, config.workers or None)
        record = EpochRecord(epoch, tr, te, float(np.mean(abs_dJ)), time.perf_counter() - t0)
        result.log.append(record)
        result.model = model
        if out is not None:
            save_model(model, out / "checkpoint.pbm")
            write_log(out / "metrics.tsv", result.log)
        for cb in callbacks or ():
            cb(record, model)
    result.model = model
    result.persistent_state = persistent
    return result


# --------------------------------------------------------------------------- exact oracle

def _check_enumerable(model: Model, data_distribution) -> np.ndarray:
    n = model.graph.node_count
    if n > 12:
        raise ValueError(f"exact gradient limited to 12 nodes, model has {n}")
    p = np.asarray(data_distribution, dtype=np.float64)
    if p.shape != (2 ** n,):
        raise ValueError(f"data distribution needs {2 ** n} probabilities")
    if np.any(p < 0) or not np.isclose(p.sum(), 1.0):
        raise ValueError("data distribution must be non-negative and sum to 1")
    return p


def exact_kl_gradient(model: Model, data_distribution, beta: float = 1.0, with_bias: bool = False):
    """beta * (<m_i m_j>_data - <m_i m_j>_model) per edge by enumeration.

    This is minus the derivative of KL(p_data || p_model) with respect to J.
    ``data_distribution`` holds probabilities over the 2^M states in the
    ordering of :func:`all_states`. Only fully visible models qualify (every
    node carries data). With ``with_bias`` the bias gradient is returned too.
    """
    p = _check_enumerable(model, data_distribution)
    q = enumerate_boltzmann(model, beta).probabilities
    S = all_states(model.graph.node_count, model.low_state).astype(np.float64)
    u, v = model.graph.edges[:, 0], model.graph.edges[:, 1]
    pair = S[:, u] * S[:, v]
    scale = beta * energy_scale(model)
    gJ = scale * (p @ pair - q @ pair)
    if with_bias:
        return gJ, scale * (p @ S - q @ S)
    return gJ


def kl_divergence(data_distribution, model: Model, beta: float = 1.0) -> float:
    """KL(p_data || p_model) with 0 log 0 = 0."""
    p = _check_enumerable(model, data_distribution)
    q = enumerate_boltzmann(model, beta).probabilities
    nz = p > 0
    return float(np.sum(p[nz] * (np.log(p[nz]) - np.log(q[nz]))))
