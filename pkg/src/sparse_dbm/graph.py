"""Sparse graph topology: ingestion, generators, DSatur coloring and node roles."""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import networkx as nx
import numpy as np


class GraphError(ValueError):
    """Malformed graph input or infeasible graph parameters."""


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Immutable undirected simple graph in CSR form.

    ``edges`` holds each unordered pair once as ``(u, v)`` with ``u < v``,
    sorted lexicographically. ``indptr``/``indices`` give the ascending
    neighbor list of every node and ``edge_of`` maps each CSR slot back to its
    row in ``edges`` so per-edge parameters can be gathered into CSR order.
    """

    node_count: int
    edges: np.ndarray
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    edge_of: np.ndarray = field(repr=False)
    coloring: np.ndarray | None = field(default=None, repr=False)
    color_schedule: tuple[np.ndarray, ...] | None = field(default=None, repr=False)

    @classmethod
    def from_edges(cls, node_count: int, edges) -> "SparseGraph":
        node_count = int(node_count)
        if node_count < 1:
            raise GraphError("graph needs at least one node")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(e):
            if e.min() < 0 or e.max() >= node_count:
                raise GraphError("edge endpoint out of range")
            if np.any(e[:, 0] == e[:, 1]):
                bad = e[e[:, 0] == e[:, 1]][0]
                raise GraphError(f"self-loop on node {bad[0]}")
        e = np.sort(e, axis=1)
        e = np.unique(e, axis=0) if len(e) else e
        e = e.astype(np.int32)

        m = len(e)
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        eid = np.concatenate([np.arange(m), np.arange(m)])
        order = np.lexsort((dst, src))
        indptr = np.zeros(node_count + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=node_count), out=indptr[1:])
        g = cls(node_count, e, indptr, dst[order].astype(np.int32), eid[order].astype(np.int64))
        for a in (g.edges, g.indptr, g.indices, g.edge_of):
            a.setflags(write=False)
        return g

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.node_count else 0

    @property
    def is_colored(self) -> bool:
        return self.coloring is not None

    @property
    def n_colors(self) -> int:
        return 0 if self.color_schedule is None else len(self.color_schedule)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def with_coloring(self, coloring) -> "SparseGraph":
        """Attach a coloring after checking it; the schedule groups nodes by color id."""
        coloring = np.asarray(coloring, dtype=np.int32)
        if coloring.shape != (self.node_count,):
            raise GraphError("coloring must assign one color per node")
        if coloring.min() < 0:
            raise GraphError("color ids must be non-negative")
        if len(self.edges) and np.any(coloring[self.edges[:, 0]] == coloring[self.edges[:, 1]]):
            raise GraphError("coloring has a monochromatic edge")
        groups = tuple(np.flatnonzero(coloring == c).astype(np.int32)
                       for c in range(int(coloring.max()) + 1))
        groups = tuple(g for g in groups if len(g))
        coloring.setflags(write=False)
        for grp in groups:
            grp.setflags(write=False)
        return SparseGraph(self.node_count, self.edges, self.indptr, self.indices,
                           self.edge_of, coloring, groups)

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.node_count))
        g.add_edges_from(map(tuple, self.edges.tolist()))
        return g


def load_edge_list(path) -> SparseGraph:
    """Read a whitespace-separated ``u v`` edge list; ``#`` starts a comment."""
    pairs = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            try:
                if len(parts) != 2:
                    raise ValueError
                u, v = int(parts[0]), int(parts[1])
                if u < 0 or v < 0:
                    raise ValueError
            except ValueError:
                raise GraphError(f"{path}:{lineno}: expected two non-negative integers, got {line.strip()!r}") from None
            if u == v:
                raise GraphError(f"{path}:{lineno}: self-loop on node {u}")
            pairs.append((u, v))
    if not pairs:
        raise GraphError(f"{path}: edge list is empty")
    e = np.array(pairs, dtype=np.int64)
    return SparseGraph.from_edges(int(e.max()) + 1, e)


def save_edge_list(g: SparseGraph, path) -> None:
    with open(path, "w") as f:
        f.write(f"# {g.node_count} nodes {g.edge_count} edges\n")
        for u, v in g.edges.tolist():
            f.write(f"{u} {v}\n")


def generate_graph(kind: str, seed: int | None = None, **params) -> SparseGraph:
    """Build a test topology.

    ``grid2d(rows, cols)`` is an open square lattice, ``random_regular(n, d)``
    a seeded uniform d-regular graph and ``bipartite_full(n_visible, n_hidden)``
    the complete bipartite graph of an RBM with visible ids first.
    """
    if kind == "grid2d":
        rows, cols = int(params["rows"]), int(params["cols"])
        if rows < 1 or cols < 1:
            raise GraphError("grid2d needs rows, cols >= 1")
        ids = np.arange(rows * cols).reshape(rows, cols)
        e = np.concatenate([
            np.stack([ids[:, :-1].ravel(), ids[:, 1:].ravel()], axis=1),
            np.stack([ids[:-1, :].ravel(), ids[1:, :].ravel()], axis=1),
        ])
        return SparseGraph.from_edges(rows * cols, e)
    if kind == "random_regular":
        n, d = int(params["n"]), int(params["d"])
        if n < 1 or d < 0 or d >= n or (n * d) % 2:
            raise GraphError(f"no {d}-regular graph on {n} nodes")
        nxg = nx.random_regular_graph(d, n, seed=seed)
        return SparseGraph.from_edges(n, np.array(list(nxg.edges()), dtype=np.int64).reshape(-1, 2))
    if kind == "bipartite_full":
        nv, nh = int(params["n_visible"]), int(params["n_hidden"])
        if nv < 1 or nh < 1:
            raise GraphError("bipartite_full needs n_visible, n_hidden >= 1")
        v, h = np.meshgrid(np.arange(nv), nv + np.arange(nh), indexing="ij")
        return SparseGraph.from_edges(nv + nh, np.stack([v.ravel(), h.ravel()], axis=1))
    raise GraphError(f"unknown graph kind {kind!r}")


def color_dsatur(g: SparseGraph) -> SparseGraph:
    """Color ``g`` with DSatur.

    The next node is the uncolored one with the most distinct neighbor colors,
    then highest degree, then lowest id; it takes the smallest free color.
    """
    n = g.node_count
    deg = g.degrees
    color = np.full(n, -1, dtype=np.int32)
    seen: list[set[int]] = [set() for _ in range(n)]
    heap = [(0, -int(deg[i]), i) for i in range(n)]
    heapq.heapify(heap)
    while heap:
        negsat, negdeg, i = heapq.heappop(heap)
        if color[i] >= 0 or -negsat != len(seen[i]):
            continue  # stale entry
        nbrs = g.neighbors(i)
        used = {int(color[j]) for j in nbrs if color[j] >= 0}
        c = 0
        while c in used:
            c += 1
        color[i] = c
        for j in nbrs:
            if color[j] < 0 and c not in seen[j]:
                seen[j].add(c)
                heapq.heappush(heap, (-len(seen[j]), -int(deg[j]), int(j)))
    return g.with_coloring(color)


@dataclass(frozen=True)
class RoleAssignment:
    """Visible, label and hidden node ids.

    ``label_ids`` is ordered replica-major: entry ``r * n_classes + c`` is the
    node holding class ``c`` in replica ``r``.
    """

    visible_ids: np.ndarray
    label_ids: np.ndarray
    hidden_ids: np.ndarray
    n_classes: int
    n_replicas: int
    permutation_seed: int | None = None

    @property
    def node_count(self) -> int:
        return len(self.visible_ids) + len(self.label_ids) + len(self.hidden_ids)

    @property
    def label_grid(self) -> np.ndarray:
        """Label node ids shaped ``(n_replicas, n_classes)``."""
        return self.label_ids.reshape(self.n_replicas, self.n_classes)

    @property
    def clamped_ids(self) -> np.ndarray:
        """Visible then label ids, the order data vectors are laid out in."""
        return np.concatenate([self.visible_ids, self.label_ids])

    def role_array(self) -> np.ndarray:
        roles = np.empty(self.node_count, dtype="<U7")
        roles[self.visible_ids] = "visible"
        roles[self.label_ids] = "label"
        roles[self.hidden_ids] = "hidden"
        return roles

    def save(self, path) -> None:
        """Write ``node_id role`` lines.

        Visible nodes carry ``visible:<pixel>`` and labels ``label:<replica>:<class>``
        so the data layout survives a round trip.
        """
        with open(path, "w") as f:
            f.write(f"# classes={self.n_classes} replicas={self.n_replicas} seed={self.permutation_seed}\n")
            tag = {int(i): f"visible:{k}" for k, i in enumerate(self.visible_ids.tolist())}
            tag.update({int(i): "hidden" for i in self.hidden_ids})
            for k, i in enumerate(self.label_ids.tolist()):
                tag[i] = f"label:{k // self.n_classes}:{k % self.n_classes}"
            for i in range(self.node_count):
                f.write(f"{i} {tag[i]}\n")

    @classmethod
    def load(cls, path) -> "RoleAssignment":
        meta, visible, hidden, labels = {}, {}, [], {}
        with open(path) as f:
            for line in f:
                line = line.strip()
                if line.startswith("#"):
                    meta.update(kv.split("=", 1) for kv in line[1:].split())
                    continue
                if not line:
                    continue
                node, role = line.split()
                if role.startswith("visible"):
                    visible[int(role.split(":")[1]) if ":" in role else len(visible)] = int(node)
                elif role == "hidden":
                    hidden.append(int(node))
                else:
                    _, r, c = role.split(":")
                    labels[(int(r), int(c))] = int(node)
        n_classes, n_replicas = int(meta["classes"]), int(meta["replicas"])
        label_ids = [labels[(r, c)] for r in range(n_replicas) for c in range(n_classes)]
        seed = None if meta.get("seed", "None") == "None" else int(meta["seed"])
        return cls(np.array([visible[k] for k in range(len(visible))], dtype=np.int32), np.array(label_ids, dtype=np.int32),
                   np.array(hidden, dtype=np.int32), n_classes, n_replicas, seed)


def assign_roles(g: SparseGraph, n_visible: int, n_classes: int, n_replicas: int,
                 permutation_seed: int = 0, randomize: bool = True) -> RoleAssignment:
    """Split nodes into visible, label and hidden sets.

    With ``randomize`` the roles are laid over a seeded uniform permutation of
    node ids so labels and pixels are scattered over the graph; otherwise ids
    are used in serial order (visible, then labels, then hidden).
    """
    n_label = n_classes * n_replicas
    if n_visible < 0 or n_classes < 1 or n_replicas < 1:
        raise GraphError("role counts must be positive")
    if n_visible + n_label > g.node_count:
        raise GraphError(f"need {n_visible + n_label} visible+label nodes, graph has {g.node_count}")
    if randomize:
        order = np.random.default_rng(permutation_seed).permutation(g.node_count)
    else:
        order = np.arange(g.node_count)
    order = order.astype(np.int32)
    return RoleAssignment(order[:n_visible], order[n_visible:n_visible + n_label],
                          np.sort(order[n_visible + n_label:]), n_classes, n_replicas,
                          permutation_seed if randomize else None)


def graph_density(g: SparseGraph) -> float:
    """Edge count over the edge count of the complete graph, 2|E|/(|V|^2-|V|)."""
    n = g.node_count
    if n < 2:
        raise GraphError("density undefined for fewer than two nodes")
    return 2.0 * g.edge_count / (n * n - n)


def random_sparse_graph(n: int, max_degree: int, p: float, seed) -> SparseGraph:
    """Erdős–Rényi style graph with edges dropped to respect a degree cap."""
    rng = np.random.default_rng(seed)
    deg = np.zeros(n, dtype=int)
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p and deg[u] < max_degree and deg[v] < max_degree:
                edges.append((u, v))
                deg[u] += 1
                deg[v] += 1
    return SparseGraph.from_edges(n, np.array(edges, dtype=np.int64).reshape(-1, 2))
