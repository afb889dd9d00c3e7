"""Ising model parameters, energies, fixed-point weights and persistence."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .graph import SparseGraph

BIPOLAR = "bipolar"
BINARY = "binary"


@dataclass(frozen=True)
class PrecisionSpec:
    """Weight format: ``float64`` or signed fixed point s{int_bits}{frac_bits}."""

    mode: str = "float64"
    int_bits: int = 6
    frac_bits: int = 3

    def __post_init__(self):
        if self.mode not in ("float64", "fixed"):
            raise ValueError(f"unknown precision mode {self.mode!r}")
        if self.mode == "fixed" and (self.int_bits < 1 or self.frac_bits < 0):
            raise ValueError("fixed point needs int_bits >= 1 and frac_bits >= 0")

    @classmethod
    def fixed(cls, int_bits: int, frac_bits: int) -> "PrecisionSpec":
        return cls("fixed", int_bits, frac_bits)

    @classmethod
    def parse(cls, text: str) -> "PrecisionSpec":
        """Accept ``float64`` or ``s{6}{3}`` / ``s6.3``."""
        text = text.strip()
        if text == "float64":
            return cls()
        body = text.lstrip("s").replace("}{", ".").strip("{}")
        i, f = body.split(".")
        return cls.fixed(int(i), int(f))

    @property
    def step(self) -> float:
        return 2.0 ** -self.frac_bits

    @property
    def max_value(self) -> float:
        return 2.0 ** self.int_bits - self.step if self.mode == "fixed" else np.inf

    def __str__(self):
        return "float64" if self.mode == "float64" else f"s{{{self.int_bits}}}{{{self.frac_bits}}}"


FLOAT64 = PrecisionSpec()
S63 = PrecisionSpec.fixed(6, 3)


def quantize(x, spec: PrecisionSpec):
    """Round to the nearest multiple of 2^-f (ties to even) and saturate.

    Identity in float64 mode. Works on scalars and arrays.
    """
    if spec.mode == "float64":
        return x
    scaled = np.rint(np.asarray(x, dtype=np.float64) * 2.0 ** spec.frac_bits) * spec.step
    out = np.clip(scaled, -spec.max_value, spec.max_value)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class Model:
    """Couplings ``J`` (one per row of ``graph.edges``) and biases ``h``.

    Values are stored already quantized to ``precision``; build models through
    :meth:`create` to guarantee that.
    """

    graph: SparseGraph
    J: np.ndarray
    h: np.ndarray
    precision: PrecisionSpec = FLOAT64
    representation: str = BIPOLAR
    _J_csr: np.ndarray = field(default=None, repr=False, compare=False)
    _nbr: tuple = field(default=None, repr=False, compare=False)

    @classmethod
    def create(cls, graph: SparseGraph, J=None, h=None, precision: PrecisionSpec = FLOAT64,
               representation: str = BIPOLAR) -> "Model":
        if representation not in (BIPOLAR, BINARY):
            raise ValueError(f"unknown representation {representation!r}")
        J = np.zeros(graph.edge_count) if J is None else np.array(J, dtype=np.float64).reshape(-1)
        h = np.zeros(graph.node_count) if h is None else np.array(h, dtype=np.float64).reshape(-1)
        if J.shape != (graph.edge_count,):
            raise ValueError(f"J needs {graph.edge_count} entries, got {J.shape}")
        if h.shape != (graph.node_count,):
            raise ValueError(f"h needs {graph.node_count} entries, got {h.shape}")
        J = np.asarray(quantize(J, precision), dtype=np.float64)
        h = np.asarray(quantize(h, precision), dtype=np.float64)
        J.setflags(write=False)
        h.setflags(write=False)
        J_csr = J[graph.edge_of] if graph.edge_count else np.zeros(0)
        return cls(graph, J, h, precision, representation, J_csr, _neighborhood(graph, J_csr, h))

    @property
    def J_csr(self) -> np.ndarray:
        """Couplings aligned with ``graph.indices``."""
        return self._J_csr

    @property
    def neighborhood(self) -> tuple:
        """Kernel view ``(indptr, indices, J_csr, nb, J_pad, h, padded)``."""
        return self._nbr

    @property
    def low_state(self) -> int:
        """The 'off' state value: -1 for bipolar, 0 for binary."""
        return -1 if self.representation == BIPOLAR else 0

    def with_params(self, J=None, h=None, precision: PrecisionSpec | None = None) -> "Model":
        return Model.create(self.graph, self.J if J is None else J, self.h if h is None else h,
                            self.precision if precision is None else precision, self.representation)

    def with_graph(self, graph: SparseGraph) -> "Model":
        """Same parameters on ``graph`` (which must share the edge set, e.g. a colored copy)."""
        if graph.edge_count != self.graph.edge_count or not np.array_equal(graph.edges, self.graph.edges):
            raise ValueError("graph edge sets differ")
        return replace(self, graph=graph, _nbr=_neighborhood(graph, self.J_csr, self.h))

    def dense_J(self) -> np.ndarray:
        n = self.graph.node_count
        W = np.zeros((n, n))
        u, v = self.graph.edges[:, 0], self.graph.edges[:, 1]
        W[u, v] = self.J
        W[v, u] = self.J
        return W


def _neighborhood(g: SparseGraph, J_csr, h) -> tuple:
    """Padded rows when they cost at most ~1.5x the CSR storage, else CSR only."""
    n, deg = g.node_count, g.degrees
    width = int(deg.max()) if n else 0
    padded = n * width <= 1.5 * len(g.indices) + n
    if padded and width:
        nb = np.repeat(np.arange(n, dtype=np.int64)[:, None], width, axis=1)
        Jp = np.zeros((n, width))
        slot = np.arange(len(g.indices)) - np.repeat(g.indptr[:-1], deg)
        row = np.repeat(np.arange(n), deg)
        nb[row, slot] = g.indices
        Jp[row, slot] = J_csr
    else:
        nb, Jp = np.zeros((1, 1), dtype=np.int64), np.zeros((1, 1))
    return (g.indptr, g.indices.astype(np.int64), J_csr, nb, Jp, h, bool(padded and width))


def effective_field(model: Model, state, node_id: int) -> float:
    """Local field sum_j J_ij m_j + h_i from the current neighbor states."""
    g = model.graph
    lo, hi = g.indptr[node_id], g.indptr[node_id + 1]
    m = np.asarray(state)
    return float(np.dot(model.J_csr[lo:hi], m[g.indices[lo:hi]]) + model.h[node_id])


def energy(model: Model, state) -> float | np.ndarray:
    """E = -(sum_{i<j} J_ij m_i m_j + sum_i h_i m_i); a 2-D ``state`` gives one energy per row."""
    m = np.asarray(state, dtype=np.float64)
    u, v = model.graph.edges[:, 0], model.graph.edges[:, 1]
    pair = (m[..., u] * m[..., v]) @ model.J
    return -(pair + m @ model.h)


def to_binary_model(model: Model) -> Model:
    """Map a bipolar model onto {0,1} states with J_bin = 2 J, h_bin = h - sum_j J_ij.

    The binary p-bit sees the same local field as its bipolar twin, so the
    chain is unchanged; its stationary law is exp(-2 beta E_bin) / Z.
    """
    if model.representation != BIPOLAR:
        raise ValueError("model is already binary")
    g = model.graph
    row_sum = np.zeros(g.node_count)
    np.add.at(row_sum, g.edges[:, 0], model.J)
    np.add.at(row_sum, g.edges[:, 1], model.J)
    return Model.create(g, 2.0 * model.J, model.h - row_sum, FLOAT64, BINARY)


def energy_scale(model: Model) -> float:
    """Factor between beta and the Boltzmann exponent for this representation."""
    return 1.0 if model.representation == BIPOLAR else 2.0


def save_model(model: Model, path) -> None:
    """Text persistence: ``PBM1`` header, ``u v J`` edge lines, ``u h`` bias lines."""
    g, p = model.graph, model.precision
    with open(path, "w") as f:
        f.write(f"PBM1 {g.node_count} {g.edge_count} {p.mode} {p.int_bits} {p.frac_bits}"
                f" {model.representation}\n")
        for (u, v), j in zip(g.edges.tolist(), model.J.tolist()):
            f.write(f"{u} {v} {j!r}\n")
        for u, hu in enumerate(model.h.tolist()):
            f.write(f"{u} {hu!r}\n")


def load_model(path, graph: SparseGraph | None = None) -> Model:
    """Inverse of :func:`save_model`; a colored ``graph`` with the same edges may be supplied."""
    with open(path) as f:
        header = f.readline().split()
        if not header or header[0] != "PBM1":
            raise ValueError(f"{path}: not a PBM1 model file")
        n, m = int(header[1]), int(header[2])
        precision = PrecisionSpec(header[3], int(header[4]), int(header[5]))
        rep = header[6] if len(header) > 6 else BIPOLAR
        edges = np.empty((m, 2), dtype=np.int64)
        J = np.empty(m)
        for k in range(m):
            u, v, j = f.readline().split()
            edges[k] = int(u), int(v)
            J[k] = float(j)
        h = np.zeros(n)
        for line in f:
            if line.strip():
                u, hu = line.split()
                h[int(u)] = float(hu)
    g = SparseGraph.from_edges(n, edges)
    # from_edges sorts edges; realign J
    order = np.lexsort((np.max(edges, 1), np.min(edges, 1)))
    J = J[order]
    if graph is not None:
        if graph.node_count != n or not np.array_equal(graph.edges, g.edges):
            raise ValueError("supplied graph does not match the stored edges")
        g = graph
    return Model.create(g, J, h, precision, rep)
