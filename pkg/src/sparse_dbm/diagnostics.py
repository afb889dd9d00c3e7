"""Exact enumeration, distribution distance, relaxation curves and throughput."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .model import Model, energy, energy_scale
from .sampler import ChainState, SampleBlock, run_chain, run_mean_trace

ENUMERATION_CAP = 20


@dataclass(frozen=True)
class ExactDistribution:
    """Boltzmann probabilities over all 2^M states.

    State ``k`` has node ``i`` 'on' when bit ``i`` of ``k`` is set.
    """

    probabilities: np.ndarray
    Z: float
    beta: float
    log_Z: float
    node_count: int

    def states(self, low: int = -1) -> np.ndarray:
        return all_states(self.node_count, low)


def all_states(n: int, low: int = -1) -> np.ndarray:
    """Every configuration of ``n`` nodes, row ``k`` encoding integer ``k`` little-endian."""
    bits = (np.arange(2 ** n)[:, None] >> np.arange(n)) & 1
    return np.where(bits == 1, 1, low).astype(np.int8)


def state_index(states) -> np.ndarray:
    """Inverse of :func:`all_states`: the integer code of each row."""
    s = np.asarray(states)
    return ((s == 1).astype(np.int64) << np.arange(s.shape[-1])).sum(axis=-1)


def random_ising_model(n: int, seed, max_degree: int = 6, j_max: float = 2.0, h_max: float = 1.0,
                       density=(0.2, 0.6)) -> Model:
    """Random sparse test model: degree-capped random graph, J ~ U(-j_max, j_max), h ~ U(-h_max, h_max).

    The edge probability is itself drawn from ``density`` so sparse and
    dense-ish models both occur.
    """
    from .graph import random_sparse_graph

    rng = np.random.default_rng(seed)
    g = random_sparse_graph(n, max_degree, float(rng.uniform(*density)), rng)
    return Model.create(g, rng.uniform(-j_max, j_max, g.edge_count), rng.uniform(-h_max, h_max, n))


def enumerate_boltzmann(model: Model, beta: float = 1.0) -> ExactDistribution:
    """Exact p(s) = exp(-beta E(s)) / Z by brute force (binary models use 2 beta)."""
    n = model.graph.node_count
    if n > ENUMERATION_CAP:
        raise ValueError(f"enumeration over {n} nodes exceeds the cap of {ENUMERATION_CAP}")
    S = all_states(n, model.low_state)
    logw = -beta * energy_scale(model) * energy(model, S)
    shift = logw.max()
    w = np.exp(logw - shift)
    total = w.sum()
    log_Z = float(np.log(total) + shift)
    return ExactDistribution(w / total, float(np.exp(log_Z)), float(beta), log_Z, n)


def empirical_distribution(states, n: int | None = None) -> np.ndarray:
    """Histogram of recorded states over the 2^n configurations, normalized."""
    s = np.asarray(states)
    n = s.shape[1] if n is None else n
    counts = np.bincount(state_index(s), minlength=2 ** n).astype(np.float64)
    return counts / counts.sum()


def tvd(empirical, exact) -> float:
    """Total variation distance 0.5 * sum |p - q|."""
    p = np.asarray(getattr(empirical, "probabilities", empirical), dtype=np.float64)
    q = np.asarray(getattr(exact, "probabilities", exact), dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"state spaces differ: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def exact_moments(model: Model, beta: float = 1.0):
    """Exact <m_u m_v> per edge and <m_i> per node."""
    dist = enumerate_boltzmann(model, beta)
    S = dist.states(model.low_state).astype(np.float64)
    p = dist.probabilities
    u, v = model.graph.edges[:, 0], model.graph.edges[:, 1]
    return p @ (S[:, u] * S[:, v]), p @ S


def batch_means_stderr(x, n_batches: int = 50) -> np.ndarray:
    """Standard error of the mean of a correlated series (columns) by batch means."""
    x = np.asarray(x, dtype=np.float64)
    n = (len(x) // n_batches) * n_batches
    means = x[:n].reshape(n_batches, -1, *x.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)


# --------------------------------------------------------------------------- relaxation

@dataclass(frozen=True)
class RelaxationCurve:
    engine: str
    mean: np.ndarray
    stderr: np.ndarray
    repetitions: int


def magnetization_relaxation(model: Model, engines=("sequential", "chromatic"), repetitions: int = 100,
                             sweeps: int = 10_000, master_seed: int = 0, workers: int | None = None,
                             watch=None) -> dict[str, RelaxationCurve]:
    """Ensemble network magnetization sum_i m_i / N versus sweep from the all-on start.

    Repetition ``k`` of every engine uses master seed ``master_seed + k``; engines
    differ in update order, so their chains are distinct.
    """
    curves = {}
    for engine in engines:
        traces = np.empty((repetitions, sweeps))
        for k in range(repetitions):
            state = ChainState.new(model, master_seed + k, init="ones")
            traces[k] = run_mean_trace(model, state, sweeps, engine, watch=watch, workers=workers)
        se = traces.std(axis=0, ddof=1) / np.sqrt(repetitions) if repetitions > 1 else np.zeros(sweeps)
        curves[engine] = RelaxationCurve(engine, traces.mean(axis=0), se, repetitions)
    return curves


def curves_agree(a: RelaxationCurve, b: RelaxationCurve, n_sigma: float = 3.0) -> np.ndarray:
    """Per-sweep flag: the two ensemble means differ by at most ``n_sigma`` combined standard errors."""
    se = np.sqrt(a.stderr ** 2 + b.stderr ** 2)
    return np.abs(a.mean - b.mean) <= n_sigma * se + 1e-12


# --------------------------------------------------------------------------- throughput

@dataclass(frozen=True)
class ThroughputReport:
    graph_size: int
    engine: str
    attempted_flips: int
    elapsed: float
    flips_per_ns: float
    repetitions: int
    stderr: float
    workers: int

    @property
    def flips_per_second(self) -> float:
        return self.flips_per_ns * 1e9


def throughput_bench(models, engine: str = "chromatic", duration: float = 1.0, repetitions: int = 5,
                     workers: int | None = None, master_seed: int = 0) -> list[ThroughputReport]:
    """Attempted flips per nanosecond for each model.

    Each repetition runs whole sweeps until ``duration / repetitions`` seconds
    pass; flips are read from the chain's exact per-node update counters.
    """
    from .sampler import set_workers

    reports = []
    for model in models:
        n = model.graph.node_count
        w = set_workers(workers) if engine == "chromatic" else 1
        state = ChainState.new(model, master_seed)
        run_chain(model, state, 2, 2, engine, workers)  # JIT warm-up
        # size a batch of sweeps to roughly 20 ms
        t0 = time.perf_counter()
        run_chain(model, state, 10, 10, engine, workers)
        per_sweep = max((time.perf_counter() - t0) / 10, 1e-9)
        batch = max(1, int(0.02 / per_sweep))
        rates, total_flips, total_time = [], 0, 0.0
        for _ in range(repetitions):
            before = int(state.update_counts.sum())
            t0 = time.perf_counter()
            elapsed = 0.0
            while elapsed < duration / repetitions:
                run_chain(model, state, batch, batch, engine, workers)
                elapsed = time.perf_counter() - t0
            flips = int(state.update_counts.sum()) - before
            rates.append(flips / (elapsed * 1e9))
            total_flips += flips
            total_time += elapsed
        rates = np.array(rates)
        se = float(rates.std(ddof=1) / np.sqrt(len(rates))) if len(rates) > 1 else 0.0
        reports.append(ThroughputReport(n, engine, total_flips, total_time,
                                        total_flips / (total_time * 1e9), repetitions, se, w))
    return reports


# --------------------------------------------------------------------------- mixing study

@dataclass(frozen=True)
class MixingRow:
    cd_sweeps: int
    epochs: list
    train_accuracy: list
    test_accuracy: list

    @property
    def final_train_accuracy(self) -> float:
        return self.train_accuracy[-1] if self.train_accuracy else float("nan")


def mixing_study(model_factory, dataset, cd_values, epochs: int, config, test_set=None,
                 eval_every: int | None = None) -> list[MixingRow]:
    """Train one model per CD-n value with otherwise identical settings.

    ``model_factory()`` returns ``(model, roles)`` fresh for each run; ``config``
    is a TrainConfig whose ``negative_sweeps`` is overridden per row (positive
    sweeps per image become ``n // batch_size``).
    """
    from dataclasses import replace

    from .trainer import train

    rows = []
    for n in cd_values:
        model, roles = model_factory()
        cfg = replace(config, epochs=epochs, negative_sweeps=int(n),
                      sweeps_per_image=max(1, int(n) // config.batch_size),
                      eval_every=eval_every or epochs)
        result = train(model, roles, dataset, cfg, test_set=test_set)
        log = result.log
        rows.append(MixingRow(int(n), [r.epoch for r in log], [r.train_acc for r in log],
                              [r.test_acc for r in log]))
    return rows


# --------------------------------------------------------------------------- reports

def write_table(path, header, rows, delimiter: str = "\t", gnuplot: bool = False) -> None:
    """Delimiter-separated report; ``gnuplot`` prefixes the header with '#'."""
    with open(path, "w") as f:
        f.write(("# " if gnuplot else "") + delimiter.join(header) + "\n")
        for row in rows:
            f.write(delimiter.join(_fmt(x) for x in row) + "\n")


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def block_energies(model: Model, block: SampleBlock) -> np.ndarray:
    return energy(model, block.states)
