"""p-bit Gibbs dynamics: sequential and graph-colored (chromatic) engines.

Both engines share one update rule: a free node computes its local field
``I = sum_j J_ij m_j + h_i``, draws ``r`` uniform on [-1, 1) from its own
stream and becomes the 'on' state when ``tanh(beta * I) >= r``.

The sequential engine visits free nodes in ascending id order. The chromatic
engine visits color groups in schedule order; nodes of one group share no
edges, so they are updated concurrently (``prange``) and the end of each
parallel loop is the barrier before the next group. Because every node draws
from its own stream, results do not depend on the worker count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from numba import njit, prange

from .model import Model
from .prng import next_symmetric, node_streams

SEQUENTIAL = "sequential"
CHROMATIC = "chromatic"
ENGINES = (SEQUENTIAL, CHROMATIC)

# skip TBB, which numba rejects noisily when the installed version is too old
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


# --------------------------------------------------------------------------- kernels
#
# Neighborhoods come in two layouts: padded rows (``idx``/``w`` of shape
# (n, max_degree), padding has J = 0) for near-regular graphs, where the fixed
# trip count vectorizes well, and CSR (``ptr``/``idx``/``w``) for skewed degree
# distributions such as a complete bipartite RBM. ``m`` is a float64 working
# copy of the states.

@njit(inline="always")
def _tanh(x):
    # 1 - 2/(e^{2x}+1) is tanh to a few ulp and much cheaper than libm tanh
    return 1.0 - 2.0 / (math.exp(2.0 * x) + 1.0)


@njit(inline="always")
def _activation(x, lut_step, lut_max):
    if lut_step > 0.0:
        if x > lut_max:
            x = lut_max
        elif x < -lut_max:
            x = -lut_max
        x = math.floor(x / lut_step + 0.5) * lut_step
    return _tanh(x)


@njit(inline="always")
def _flip(i, f, m, rng, counts, beta, lo, lut_step, lut_max):
    t = _activation(beta * f, lut_step, lut_max)
    r = next_symmetric(rng, i)
    m[i] = 1.0 if t >= r else lo
    counts[i] += 1


@njit(inline="always")
def _field_padded(i, ptr, nb, Jp, h, m):
    f = h[i]
    for k in range(nb.shape[1]):
        f += Jp[i, k] * m[nb[i, k]]
    return f


@njit(inline="always")
def _field_csr(i, ptr, idx, Jc, h, m):
    f = h[i]
    for k in range(ptr[i], ptr[i + 1]):
        f += Jc[k] * m[idx[k]]
    return f


@njit(cache=True)
def _sweep_serial_padded(order, bounds, ptr, idx, w, h, m, rng, counts, beta, lo, lut_step, lut_max):
    for p in range(order.shape[0]):
        i = order[p]
        _flip(i, _field_padded(i, ptr, idx, w, h, m), m, rng, counts, beta, lo, lut_step, lut_max)


@njit(cache=True)
def _sweep_serial_csr(order, bounds, ptr, idx, w, h, m, rng, counts, beta, lo, lut_step, lut_max):
    for p in range(order.shape[0]):
        i = order[p]
        _flip(i, _field_csr(i, ptr, idx, w, h, m), m, rng, counts, beta, lo, lut_step, lut_max)


@njit(cache=True, parallel=True)
def _sweep_parallel_padded(order, bounds, ptr, idx, w, h, m, rng, counts, beta, lo, lut_step, lut_max):
    for g in range(bounds.shape[0] - 1):
        for p in prange(bounds[g], bounds[g + 1]):
            i = order[p]
            _flip(i, _field_padded(i, ptr, idx, w, h, m), m, rng, counts, beta, lo, lut_step, lut_max)


@njit(cache=True, parallel=True)
def _sweep_parallel_csr(order, bounds, ptr, idx, w, h, m, rng, counts, beta, lo, lut_step, lut_max):
    for g in range(bounds.shape[0] - 1):
        for p in prange(bounds[g], bounds[g + 1]):
            i = order[p]
            _flip(i, _field_csr(i, ptr, idx, w, h, m), m, rng, counts, beta, lo, lut_step, lut_max)


_SWEEPS = {
    (False, True): _sweep_serial_padded,
    (False, False): _sweep_serial_csr,
    (True, True): _sweep_parallel_padded,
    (True, False): _sweep_parallel_csr,
}


@njit(cache=True)
def _run_record(sweep, order, bounds, ptr, idx, w, h, m, rng, counts, beta, lo, lut_step, lut_max,
                n_sweeps, stride, out):
    row = 0
    for s in range(1, n_sweeps + 1):
        sweep(order, bounds, ptr, idx, w, h, m, rng, counts, beta, lo, lut_step, lut_max)
        if s % stride == 0:
            for i in range(m.shape[0]):
                out[row, i] = np.int8(m[i])
            row += 1


@njit(cache=True)
def _run_stats(sweep, order, bounds, ptr, idx, w, h, m, rng, counts, beta, lo, lut_step, lut_max,
               n_sweeps, eu, ev, pair_sum, node_sum):
    for _ in range(n_sweeps):
        sweep(order, bounds, ptr, idx, w, h, m, rng, counts, beta, lo, lut_step, lut_max)
        for e in range(eu.shape[0]):
            pair_sum[e] += m[eu[e]] * m[ev[e]]
        for i in range(m.shape[0]):
            node_sum[i] += m[i]


@njit(cache=True)
def _run_node_means(sweep, order, bounds, ptr, idx, w, h, m, rng, counts, beta, lo, lut_step, lut_max,
                    n_sweeps, watch, out):
    """Per-sweep mean state over ``watch`` nodes."""
    inv = 1.0 / watch.shape[0]
    for s in range(n_sweeps):
        sweep(order, bounds, ptr, idx, w, h, m, rng, counts, beta, lo, lut_step, lut_max)
        acc = 0.0
        for k in range(watch.shape[0]):
            acc += m[watch[k]]
        out[s] = acc * inv


@njit(cache=True)
def _run_node_sums(sweep, order, bounds, ptr, idx, w, h, m, rng, counts, beta, lo, lut_step, lut_max,
                   n_sweeps, watch, out):
    """Per-node state sums over ``watch`` nodes across ``n_sweeps`` sweeps."""
    for _ in range(n_sweeps):
        sweep(order, bounds, ptr, idx, w, h, m, rng, counts, beta, lo, lut_step, lut_max)
        for k in range(watch.shape[0]):
            out[k] += m[watch[k]]


# --------------------------------------------------------------------------- types

@dataclass(frozen=True)
class AnnealSchedule:
    """Inverse temperatures from ``beta_start`` to ``beta_end`` in ``beta_step`` increments."""

    beta_start: float = 0.0
    beta_end: float = 5.0
    beta_step: float = 0.125
    sweeps_per_step: int = 100

    def __post_init__(self):
        if self.sweeps_per_step < 1:
            raise ValueError("sweeps_per_step must be positive")
        span = self.beta_end - self.beta_start
        if span != 0 and (self.beta_step == 0 or math.copysign(1, self.beta_step) != math.copysign(1, span)):
            raise ValueError("beta_step must be non-zero and point from start to end")

    def betas(self) -> np.ndarray:
        span = self.beta_end - self.beta_start
        if span == 0:
            return np.array([float(self.beta_start)])
        k = int(math.floor(span / self.beta_step + 1e-9))
        out = self.beta_start + self.beta_step * np.arange(k + 1)
        if abs(out[-1] - self.beta_end) > 1e-9 * max(1.0, abs(self.beta_end)):
            out = np.append(out, self.beta_end)
        out[-1] = self.beta_end
        return out


@dataclass
class ChainState:
    """Mutable chain: states, clamps, inverse temperature and per-node streams.

    ``update_counts[i]`` counts the updates node ``i`` has received, and
    ``sweep`` the completed sweeps, so attempted flips are exact.
    """

    m: np.ndarray
    clamp_mask: np.ndarray
    beta: float
    rng: np.ndarray = field(repr=False)
    low: int = -1
    sweep: int = 0
    update_counts: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.update_counts is None:
            self.update_counts = np.zeros(len(self.m), dtype=np.int64)

    @classmethod
    def new(cls, model: Model, master_seed: int, init="random", beta: float = 1.0) -> "ChainState":
        """Fresh chain. ``init`` is ``'random'``, ``'ones'`` (all on), ``'low'`` or an array."""
        n = model.graph.node_count
        low = model.low_state
        if isinstance(init, str):
            if init == "random":
                bits = np.random.default_rng([int(master_seed), 0x5EED]).integers(0, 2, n)
                m = np.where(bits == 1, 1, low)
            elif init == "ones":
                m = np.ones(n)
            elif init == "low":
                m = np.full(n, low)
            else:
                raise ValueError(f"unknown init {init!r}")
        else:
            m = np.asarray(init)
            if m.shape != (n,):
                raise ValueError("initial state has the wrong length")
        m = np.asarray(m, dtype=np.int8).copy()
        if not np.all((m == 1) | (m == low)):
            raise ValueError("initial state values must be in the model's state alphabet")
        return cls(m, np.zeros(n, dtype=bool), float(beta), node_streams(master_seed, n), low)

    @property
    def clamp_values(self) -> np.ndarray:
        return self.m[self.clamp_mask]

    def clamp(self, ids, values) -> None:
        """Pin ``ids`` to ``values`` (given as 0/1 or in the state alphabet)."""
        ids = np.asarray(ids, dtype=np.int64)
        v = np.broadcast_to(np.asarray(values), ids.shape)
        v = np.where((v == 1), 1, self.low).astype(np.int8)
        self.m[ids] = v
        self.clamp_mask[ids] = True

    def release(self, ids=None) -> None:
        if ids is None:
            self.clamp_mask[:] = False
        else:
            self.clamp_mask[np.asarray(ids, dtype=np.int64)] = False

    def activations(self) -> np.ndarray:
        """States mapped to {0, 1}."""
        return (self.m == 1).astype(np.float64)

    def copy(self) -> "ChainState":
        return ChainState(self.m.copy(), self.clamp_mask.copy(), self.beta, self.rng.copy(),
                          self.low, self.sweep, self.update_counts.copy())


@dataclass(frozen=True)
class SampleBlock:
    """Recorded snapshots: ``states[k]`` is the chain after sweep ``sweeps[k]``."""

    sweeps: np.ndarray
    states: np.ndarray
    stride: int
    betas: np.ndarray | None = None

    def __len__(self):
        return len(self.sweeps)

    def activations(self) -> np.ndarray:
        return (self.states == 1).astype(np.float64)

    def save(self, path) -> None:
        """Bit-packed states in ``path`` plus a ``<path>.sweeps`` text sidecar."""
        n = self.states.shape[1] if self.states.ndim == 2 else 0
        with open(path, "wb") as f:
            f.write(f"PBS1 {len(self)} {n} {self.stride}\n".encode())
            f.write(np.packbits(self.states == 1, axis=1).tobytes())
        with open(f"{path}.sweeps", "w") as f:
            for k, s in enumerate(self.sweeps.tolist()):
                extra = f" {float(self.betas[k])!r}" if self.betas is not None else ""
                f.write(f"{s}{extra}\n")

    @classmethod
    def load(cls, path, low: int = -1) -> "SampleBlock":
        with open(path, "rb") as f:
            magic, rows, n, stride = f.readline().split()
            if magic != b"PBS1":
                raise ValueError(f"{path}: not a sample block")
            rows, n = int(rows), int(n)
            packed = np.frombuffer(f.read(), dtype=np.uint8).reshape(rows, -1)
        bits = np.unpackbits(packed, axis=1, count=n)
        states = np.where(bits == 1, 1, low).astype(np.int8)
        cols = [line.split() for line in open(f"{path}.sweeps") if line.strip()]
        sweeps = np.array([int(c[0]) for c in cols], dtype=np.int64)
        betas = np.array([float(c[1]) for c in cols]) if cols and len(cols[0]) > 1 else None
        return cls(sweeps, states, int(stride), betas)


# --------------------------------------------------------------------------- engine plumbing

def set_workers(workers: int | None) -> int:
    """Set the chromatic engine's thread count (capped by numba's pool) and return it."""
    if workers is None or workers <= 0:
        return numba.get_num_threads()
    workers = min(int(workers), numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(workers)
    return workers


def _schedule(model: Model, state: ChainState, engine: str):
    """Free-node visiting order and color-group boundaries for one sweep."""
    free = ~state.clamp_mask
    if engine == SEQUENTIAL:
        order = np.flatnonzero(free).astype(np.int64)
        return order, np.array([0, len(order)], dtype=np.int64)
    if engine != CHROMATIC:
        raise ValueError(f"unknown engine {engine!r}")
    if not model.graph.is_colored:
        raise ValueError("chromatic engine needs a colored graph (see color_dsatur)")
    groups = [grp[free[grp]] for grp in model.graph.color_schedule]
    bounds = np.zeros(len(groups) + 1, dtype=np.int64)
    np.cumsum([len(grp) for grp in groups], out=bounds[1:])
    order = np.concatenate(groups).astype(np.int64) if groups else np.zeros(0, np.int64)
    return order, bounds


class _Kernel:
    """Bound kernel arguments for one engine call; writes states back on ``close``."""

    def __init__(self, model: Model, state: ChainState, engine: str, workers: int | None, lut):
        if (model.representation == "bipolar") != (state.low == -1):
            raise ValueError("chain state alphabet does not match the model representation")
        order, bounds = _schedule(model, state, engine)
        parallel = engine == CHROMATIC and set_workers(workers) > 1
        indptr, indices, J_csr, nb, J_pad, h, padded = model.neighborhood
        self.sweep = _SWEEPS[parallel, padded]
        self.state = state
        self.m = state.m.astype(np.float64)
        lut_step, lut_max = (0.0, 0.0) if lut is None else (float(lut[0]), float(lut[1]))
        nbr = (indptr, nb, J_pad, h) if padded else (indptr, indices, J_csr, h)
        self.args = (order, bounds, *nbr, self.m, state.rng, state.update_counts,
                     float(state.beta), float(state.low), lut_step, lut_max)

    def close(self, n_sweeps: int) -> None:
        self.state.m[:] = self.m.astype(np.int8)
        self.state.sweep += n_sweeps


def sweep_sequential(model: Model, state: ChainState, lut=None) -> ChainState:
    """One sweep updating free nodes in ascending id order, each seeing the latest states."""
    k = _Kernel(model, state, SEQUENTIAL, None, lut)
    k.sweep(*k.args)
    k.close(1)
    return state


def sweep_chromatic(model: Model, state: ChainState, workers: int | None = None, lut=None) -> ChainState:
    """One sweep as barrier-separated color rounds."""
    k = _Kernel(model, state, CHROMATIC, workers, lut)
    k.sweep(*k.args)
    k.close(1)
    return state


def update_pbit(model: Model, state: ChainState, node_id: int, lut=None) -> int:
    """Update a single node in place and return its new value (no-op when clamped)."""
    if state.clamp_mask[node_id]:
        return int(state.m[node_id])
    k = _Kernel(model, state, SEQUENTIAL, None, lut)
    order = np.array([node_id], dtype=np.int64)
    k.sweep(order, np.array([0, 1], dtype=np.int64), *k.args[2:])
    k.close(0)
    return int(state.m[node_id])


def run_chain(model: Model, state: ChainState, n_sweeps: int, stride: int = 1,
              engine: str = SEQUENTIAL, workers: int | None = None, lut=None) -> SampleBlock:
    """Run ``n_sweeps`` sweeps, recording the state after every ``stride``-th sweep."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n = model.graph.node_count
    if n_sweeps <= 0:
        return SampleBlock(np.zeros(0, dtype=np.int64), np.zeros((0, n), dtype=np.int8), stride)
    rows = n_sweeps // stride
    out = np.empty((rows, n), dtype=np.int8)
    k = _Kernel(model, state, engine, workers, lut)
    sweeps = state.sweep + stride * np.arange(1, rows + 1, dtype=np.int64)
    _run_record(k.sweep, *k.args, int(n_sweeps), int(stride), out)
    k.close(n_sweeps)
    return SampleBlock(sweeps, out, stride)


def run_statistics(model: Model, state: ChainState, n_sweeps: int, engine: str = SEQUENTIAL,
                   workers: int | None = None, lut=None):
    """Run ``n_sweeps`` sweeps and return summed per-edge ``m_u m_v`` and per-node ``m``.

    Equivalent to recording with stride 1 and reducing the block, without
    materializing it.
    """
    g = model.graph
    pair_sum = np.zeros(g.edge_count)
    node_sum = np.zeros(g.node_count)
    if n_sweeps > 0:
        k = _Kernel(model, state, engine, workers, lut)
        _run_stats(k.sweep, *k.args, int(n_sweeps), g.edges[:, 0].astype(np.int64),
                   g.edges[:, 1].astype(np.int64), pair_sum, node_sum)
        k.close(n_sweeps)
    return pair_sum, node_sum


def run_mean_trace(model: Model, state: ChainState, n_sweeps: int, engine: str = SEQUENTIAL,
                   watch=None, workers: int | None = None, lut=None) -> np.ndarray:
    """Mean state over ``watch`` nodes (default: all) after each of ``n_sweeps`` sweeps."""
    watch = np.arange(model.graph.node_count) if watch is None else np.asarray(watch)
    out = np.empty(n_sweeps)
    if n_sweeps > 0:
        k = _Kernel(model, state, engine, workers, lut)
        _run_node_means(k.sweep, *k.args, int(n_sweeps), watch.astype(np.int64), out)
        k.close(n_sweeps)
    return out


def run_node_averages(model: Model, state: ChainState, n_sweeps: int, watch, engine: str = SEQUENTIAL,
                      workers: int | None = None, lut=None) -> np.ndarray:
    """Time-averaged activation (fraction of sweeps 'on') of each ``watch`` node."""
    watch = np.asarray(watch, dtype=np.int64)
    out = np.zeros(len(watch))
    if n_sweeps <= 0:
        return out
    k = _Kernel(model, state, engine, workers, lut)
    _run_node_sums(k.sweep, *k.args, int(n_sweeps), watch, out)
    k.close(n_sweeps)
    mean = out / n_sweeps
    return (mean + 1.0) / 2.0 if state.low == -1 else mean


def anneal(model: Model, state: ChainState, schedule: AnnealSchedule, engine: str = SEQUENTIAL,
           workers: int | None = None, lut=None) -> SampleBlock:
    """Step beta through ``schedule``, recording the final state at each beta."""
    betas = schedule.betas()
    n = model.graph.node_count
    out = np.empty((len(betas), n), dtype=np.int8)
    sweeps = np.empty(len(betas), dtype=np.int64)
    for k, beta in enumerate(betas):
        state.beta = float(beta)
        block = run_chain(model, state, schedule.sweeps_per_step, schedule.sweeps_per_step,
                          engine, workers, lut)
        out[k] = block.states[-1]
        sweeps[k] = block.sweeps[-1]
    return SampleBlock(sweeps, out, schedule.sweeps_per_step, betas)
