"""Graph search: DFS-LP, the FAIR-PATH contraction, Hamiltonian paths, and the
subset-edge property, plus exhaustive oracles used to test them.

Neighbor lists are kept sorted by the vertex order key (arrival time for
simulation graphs), and every DFS visits out-neighbors oldest first.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, maximum_bipartite_matching

from .oracle import EdgeOracle

BRUTEFORCE_LIMIT = 16
EXACT_HAMILTONIAN_LIMIT = 20


class GraphSizeError(ValueError):
    pass


@dataclass
class DiGraph:
    """Directed graph as ordered out-neighbor lists.

    The key order of ``succ`` is the vertex order; each neighbor list follows
    that same order.
    """

    succ: dict[int, list[int]] = field(default_factory=dict)

    @classmethod
    def from_edges(cls, nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> "DiGraph":
        nodes = list(nodes)
        rank = {v: i for i, v in enumerate(nodes)}
        succ: dict[int, list[int]] = {v: [] for v in nodes}
        for u, v in edges:
            if u == v:
                raise ValueError(f"self-loop at {u}")
            if v not in succ[u]:
                succ[u].append(v)
        for v in nodes:
            succ[v].sort(key=rank.__getitem__)
        return cls(succ)

    @classmethod
    def from_matrix(cls, adj: np.ndarray, nodes: Sequence[int] | None = None) -> "DiGraph":
        n = adj.shape[0]
        nodes = list(range(n)) if nodes is None else list(nodes)
        adj = adj.copy()
        np.fill_diagonal(adj, False)
        return cls({nodes[i]: [nodes[j] for j in np.flatnonzero(adj[i])] for i in range(n)})

    @classmethod
    def from_edge_list_text(cls, text: str, nodes: Iterable[int] | None = None) -> "DiGraph":
        edges = [tuple(int(x) for x in line.split()) for line in text.splitlines() if line.strip()]
        if nodes is None:
            nodes = sorted({v for e in edges for v in e})
        return cls.from_edges(nodes, edges)

    @property
    def nodes(self) -> list[int]:
        return list(self.succ)

    def __len__(self) -> int:
        return len(self.succ)

    def __contains__(self, v: int) -> bool:
        return v in self.succ

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u, nbrs in self.succ.items() for v in nbrs]

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.succ.get(u, ())

    def edge_list_text(self) -> str:
        return "".join(f"{u} {v}\n" for u, v in self.edges())

    def adjacency_matrix(self) -> tuple[np.ndarray, list[int]]:
        nodes = self.nodes
        rank = {v: i for i, v in enumerate(nodes)}
        adj = np.zeros((len(nodes), len(nodes)), dtype=bool)
        for u, nbrs in self.succ.items():
            for v in nbrs:
                adj[rank[u], rank[v]] = True
        return adj, nodes


@dataclass
class LabeledDiGraph(DiGraph):
    """FAIR-PATH graph: new arrivals plus the chain end.

    An edge u1 -> u2 may carry a label, the old waiting node v with oracle edges
    u1 -> v -> u2.  Edges out of ``start`` (the chain end) are unlabeled.
    """

    start: int = 0
    labels: dict[tuple[int, int], int] = field(default_factory=dict)
    empty_extension: bool = False


def random_digraph(n: int, p: float, rng: np.random.Generator) -> DiGraph:
    adj = rng.random((n, n)) < p
    return DiGraph.from_matrix(adj)


def complete_digraph(n: int) -> DiGraph:
    return DiGraph.from_matrix(np.ones((n, n), dtype=bool))


# ---------------------------------------------------------------------------
# depth-first search

def _reconstruct(parent: dict[int, int | None], v: int) -> list[int]:
    path = []
    while v is not None:
        path.append(v)
        v = parent[v]
    return path[::-1]


def dfs_longest_observed(graph: DiGraph, start: int) -> list[int]:
    """DFS-LP: run one DFS from ``start`` and return the deepest stack seen.

    The stack is always the tree path to the vertex on top, so the deepest stack
    is recovered from parent pointers.  Once every vertex has been discovered
    the stack can only shrink, which lets the search stop early.
    """
    succ = graph.succ
    if start not in succ:
        raise KeyError(f"start vertex {start} not in graph")
    n = len(succ)
    parent: dict[int, int | None] = {start: None}
    stack = [start]
    iters = [iter(succ[start])]
    best, best_v = 1, start
    while stack and len(parent) < n:
        for w in iters[-1]:
            if w not in parent:
                break
        else:
            stack.pop()
            iters.pop()
            continue
        parent[w] = stack[-1]
        stack.append(w)
        iters.append(iter(succ[w]))
        if len(stack) > best:
            best, best_v = len(stack), w
    return _reconstruct(parent, best_v)


def dfs_longest_observed_all(graph: DiGraph) -> list[int]:
    """DFS-LP over the whole graph, restarting at the oldest unvisited vertex
    whenever the stack empties (the regime of the long-path lemma)."""
    succ = graph.succ
    parent: dict[int, int | None] = {}
    best, best_v = 0, None
    for root in succ:
        if root in parent:
            continue
        parent[root] = None
        stack = [root]
        iters = [iter(succ[root])]
        if best < 1:
            best, best_v = 1, root
        while stack:
            for w in iters[-1]:
                if w not in parent:
                    break
            else:
                stack.pop()
                iters.pop()
                continue
            parent[w] = stack[-1]
            stack.append(w)
            iters.append(iter(succ[w]))
            if len(stack) > best:
                best, best_v = len(stack), w
    return [] if best_v is None else _reconstruct(parent, best_v)


def longest_path_bruteforce(graph: DiGraph, start: int) -> list[int]:
    """Exact longest simple path from ``start`` by exhaustive search."""
    if len(graph) > BRUTEFORCE_LIMIT:
        raise GraphSizeError(f"brute force limited to {BRUTEFORCE_LIMIT} vertices")
    if start not in graph:
        raise KeyError(f"start vertex {start} not in graph")
    succ = graph.succ
    n = len(graph)
    best = [start]
    path = [start]
    on_path = {start}

    def extend() -> bool:
        nonlocal best
        if len(path) > len(best):
            best = list(path)
            if len(best) == n:
                return True
        for w in succ[path[-1]]:
            if w not in on_path:
                path.append(w)
                on_path.add(w)
                if extend():
                    return True
                path.pop()
                on_path.discard(w)
        return False

    extend()
    return best


# ---------------------------------------------------------------------------
# FAIR-PATH

def _pick_uniform_true(mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Per row, the column of one uniformly chosen True entry (-1 if none)."""
    counts = mask.sum(axis=1)
    r = np.floor(rng.random(mask.shape[0]) * counts).astype(np.int64)
    csum = np.cumsum(mask, axis=1, dtype=np.int32)
    idx = (csum <= r[:, None]).sum(axis=1)
    idx[counts == 0] = -1
    return idx


def _labeled_graph(v_end: int, vfp: np.ndarray, end_out: np.ndarray,
                   u1: np.ndarray, u2: np.ndarray, lab: np.ndarray,
                   rng: np.random.Generator) -> LabeledDiGraph:
    """Assemble the FAIR-PATH graph from per-old-node index choices.

    ``u1``/``u2`` index into ``vfp`` (-1 = none); self-loops are dropped and
    parallel edges reduced to one uniformly random survivor.
    """
    ok = (u1 >= 0) & (u2 >= 0) & (u1 != u2)
    u1, u2, lab = u1[ok], u2[ok], lab[ok]
    if len(lab) > 1:
        perm = rng.permutation(len(lab))
        u1, u2, lab = u1[perm], u2[perm], lab[perm]
        _, first = np.unique(u1 * len(vfp) + u2, return_index=True)
        u1, u2, lab = u1[first], u2[first], lab[first]
    # oldest-first neighbor lists
    order = np.lexsort((u2, u1))
    u1, u2, lab = u1[order], u2[order], lab[order]

    ids = vfp.tolist()
    succ: dict[int, list[int]] = {v_end: [ids[j] for j in np.flatnonzero(end_out)]}
    for v in ids:
        succ[v] = []
    labels: dict[tuple[int, int], int] = {}
    for a, b, v in zip(u1.tolist(), u2.tolist(), lab.tolist()):
        succ[ids[a]].append(ids[b])
        labels[(ids[a], ids[b])] = v
    return LabeledDiGraph(succ, start=v_end, labels=labels,
                          empty_extension=not end_out.any())


def build_fair_path_graph(Q: Sequence[int], V_fp: Sequence[int], v_end: int,
                          oracle: EdgeOracle, rng: np.random.Generator) -> LabeledDiGraph:
    """Contract every old waiting node v into one labeled edge u1 -> u2 with
    u1 drawn uniformly from IN(v) and u2 from OUT(v), both within ``V_fp``."""
    q = np.asarray(Q, dtype=np.int64)
    vfp = np.sort(np.asarray(V_fp, dtype=np.int64))
    if np.intersect1d(q, vfp).size or v_end in set(vfp.tolist()):
        raise ValueError("Q, V_fp and the chain end must be disjoint")
    end_out = oracle.edges(v_end, vfp)
    if len(q) and len(vfp):
        into = oracle.edges(vfp[None, :], q[:, None])
        outof = oracle.edges(q[:, None], vfp[None, :])
        u1 = _pick_uniform_true(into, rng)
        u2 = _pick_uniform_true(outof, rng)
    else:
        u1 = u2 = np.empty(0, dtype=np.int64)
    return _labeled_graph(v_end, vfp, end_out, u1, u2, q[:len(u1)], rng)


def expand_labeled_path(graph: LabeledDiGraph, path: Sequence[int]) -> list[int]:
    """Turn a path in the FAIR-PATH graph into chain nodes, inserting each
    edge's label between its endpoints; the chain end itself is dropped."""
    if not path or path[0] != graph.start:
        raise ValueError("path must start at the chain end")
    nodes: list[int] = []
    for a, b in zip(path, path[1:]):
        label = graph.labels.get((a, b))
        if label is not None:
            nodes.append(label)
        nodes.append(b)
    return nodes


class IncrementalFairPath:
    """FAIR-PATH state that grows one arrival at a time.

    IN/OUT choices are reservoir samples, so after any number of arrivals each
    old node's choice is uniform over its current IN (or OUT) set, while each
    arrival costs O(|Q|) instead of rebuilding the |Q| x |V_fp| incidence.
    Alongside, the direct graph on the new arrivals (the plain G(n, p) among
    them) is kept as ordered adjacency lists.
    """

    def __init__(self, Q: Sequence[int], v_end: int, oracle: EdgeOracle,
                 rng: np.random.Generator) -> None:
        self.oracle = oracle
        self.rng = rng
        self.v_end = v_end
        self.q = np.asarray(Q, dtype=np.int64)
        m = len(self.q)
        self.in_count = np.zeros(m, dtype=np.int64)
        self.out_count = np.zeros(m, dtype=np.int64)
        self.in_pick = np.full(m, -1, dtype=np.int64)
        self.out_pick = np.full(m, -1, dtype=np.int64)
        # Q followed by the arrivals so far, grown by doubling
        self._ids = np.zeros(m + 64, dtype=np.int64)
        self._ids[:m] = self.q
        self._n = 0
        self.end_out: list[bool] = []
        self.direct: dict[int, list[int]] = {v_end: []}

    def __len__(self) -> int:
        return self._n

    @property
    def vfp(self) -> np.ndarray:
        m = len(self.q)
        return self._ids[m:m + self._n]

    def add(self, u: int) -> None:
        j = self._n
        m = len(self.q)
        prev = self.vfp
        hit_out, hit_in = self.oracle.both_ways(u, self._ids[:m + j])
        if m:
            draws = self.rng.random((2, m))
            self.in_count += hit_out[:m]
            self.out_count += hit_in[:m]
            take_in = hit_out[:m] & (draws[0] * self.in_count < 1.0)
            take_out = hit_in[:m] & (draws[1] * self.out_count < 1.0)
            self.in_pick[take_in] = j
            self.out_pick[take_out] = j
        from_end = self.oracle.edge_exists(self.v_end, u)
        self.end_out.append(from_end)
        if from_end:
            self.direct[self.v_end].append(u)
        self.direct[u] = prev[hit_out[m:]].tolist()
        for w in prev[hit_in[m:]].tolist():
            self.direct[w].append(u)
        if m + j == len(self._ids):
            self._ids = np.resize(self._ids, 2 * len(self._ids))
        self._ids[m + j] = u
        self._n += 1

    def labeled_graph(self) -> LabeledDiGraph:
        return _labeled_graph(self.v_end, self.vfp.copy(),
                              np.asarray(self.end_out, dtype=bool),
                              self.in_pick, self.out_pick, self.q, self.rng)

    def direct_graph(self) -> LabeledDiGraph:
        return LabeledDiGraph(self.direct, start=self.v_end,
                              empty_extension=not any(self.end_out))


# ---------------------------------------------------------------------------
# Hamiltonian paths

def _index_form(graph: DiGraph) -> tuple[list[int], list[list[int]]]:
    nodes = graph.nodes
    rank = {v: i for i, v in enumerate(nodes)}
    return nodes, [[rank[w] for w in graph.succ[v]] for v in nodes]


def hamiltonian_path_dp(graph: DiGraph, start_candidates: Iterable[int] | None = None) -> list[int] | None:
    """Exact Held-Karp search over vertex subsets; ``None`` if no path exists.

    Layer k holds the reachable k-vertex subsets (sorted bitmasks) and, per
    subset, the bitmask of vertices that can end a path covering exactly it
    and starting at a candidate.  Only reachable subsets are ever stored.
    """
    nodes, out = _index_form(graph)
    n = len(nodes)
    if n == 0:
        return None
    if n > 24:
        raise GraphSizeError("exact Hamiltonian search limited to 24 vertices")
    rank = {v: i for i, v in enumerate(nodes)}
    starts = range(n) if start_candidates is None else [rank[s] for s in start_candidates if s in rank]
    pred = [0] * n
    for u in range(n):
        for w in out[u]:
            pred[w] |= 1 << u
    bits = np.left_shift(np.int64(1), np.arange(n, dtype=np.int64))
    pred_arr = np.asarray(pred, dtype=np.int64)
    first = np.unique(bits[list(starts)])
    layers = [(first, first.copy())]
    for _ in range(1, n):
        masks, ends = layers[-1]
        if not len(masks):
            return None
        # sel[i, v]: v is outside subset i and some end of subset i points at v
        sel = ((masks[:, None] & bits) == 0) & ((ends[:, None] & pred_arr) != 0)
        rows, vs = np.nonzero(sel)
        merged, inv = np.unique(masks[rows] | bits[vs], return_inverse=True)
        merged_ends = np.zeros(len(merged), dtype=np.int64)
        np.bitwise_or.at(merged_ends, inv, bits[vs])
        layers.append((merged, merged_ends))
    masks, ends = layers[-1]
    if not len(masks):
        return None
    e = int(ends[0]).bit_length() - 1
    path = [e]
    mask = (1 << n) - 1
    for k in range(n - 2, -1, -1):
        mask ^= 1 << e
        lm, le = layers[k]
        cands = int(le[np.searchsorted(lm, mask)]) & pred[e]
        e = cands.bit_length() - 1
        path.append(e)
    return [nodes[i] for i in reversed(path)]


def _ham_heuristic(out: list[list[int]], starts: list[int], rng: np.random.Generator,
                   restarts: int, rotation_limit: int) -> list[int] | None:
    """Randomized DFS extension with Warnsdorff ordering and directed rotations.

    Stuck at end x with x -> path[i]: if path[i-1] -> path[j] for some j > i,
    the path  path[:i] + path[j:] + path[i:j]  is valid and ends at path[j-1].
    An edge x -> path[0] closes a cycle, which may be re-entered at any
    start candidate.
    """
    n = len(out)
    outset = [set(o) for o in out]
    inn: list[list[int]] = [[] for _ in range(n)]
    for u in range(n):
        for w in out[u]:
            inn[w].append(u)
    start_set = set(starts)
    base_free = [len(o) for o in out]
    for _ in range(restarts):
        s = starts[int(rng.integers(len(starts)))]
        # free[v]: out-neighbors of v not yet on the path (rotations keep the set)
        free = base_free[:]
        path = [s]
        pos = [-1] * n
        pos[s] = 0
        for u in inn[s]:
            free[u] -= 1
        rotations = 0
        while len(path) < n:
            x = path[-1]
            if free[x]:
                low = n
                for w in out[x]:
                    if pos[w] < 0:
                        f = free[w]
                        if f < low:
                            low, best = f, [w]
                        elif f == low:
                            best.append(w)
                w = best[int(rng.integers(len(best)))] if len(best) > 1 else best[0]
                pos[w] = len(path)
                path.append(w)
                for u in inn[w]:
                    free[u] -= 1
                continue
            if rotations >= rotation_limit or not out[x]:
                break
            rotations += 1
            options = []
            for w in out[x]:
                i = pos[w]
                if i == 0:
                    options.extend((0, j) for j in range(1, len(path)) if path[j] in start_set)
                else:
                    a = path[i - 1]
                    options.extend((i, pos[y]) for y in outset[a] if pos[y] > i)
            if not options:
                break
            # prefer rotations whose new end can extend the path
            good = [o for o in options if free[path[o[1] - 1]]]
            pool = good or options
            i, j = pool[int(rng.integers(len(pool)))]
            if i == 0:
                path = path[j:] + path[:j]
            else:
                path = path[:i] + path[j:] + path[i:j]
            for k, v in enumerate(path):
                pos[v] = k
        if len(path) == n:
            return path
    return None


def hamiltonian_obstruction(adj: np.ndarray, starts: Sequence[int]) -> str | None:
    """A certificate that no Hamiltonian path from ``starts`` exists, or ``None``.

    ``adj`` is a boolean adjacency matrix.  A virtual root r with edges to
    every start turns the question into a Hamiltonian path from r.  Two
    necessary conditions are checked: every vertex needs its own predecessor
    (a perfect matching of vertices to distinct predecessors in the
    root-augmented graph), and the strongly connected components must be
    visitable in one sweep (their condensation has a Hamiltonian path, i.e. its
    topological order is unique).
    """
    n = len(adj)
    aug = np.zeros((n + 1, n + 1), dtype=bool)
    aug[:n, :n] = adj
    aug[n, list(starts)] = True
    rows, cols = np.nonzero(aug)
    indptr = np.searchsorted(rows, np.arange(n + 2)).astype(np.int32)
    mat = csr_matrix((np.ones(len(cols), dtype=np.int8), cols.astype(np.int32), indptr),
                     shape=(n + 1, n + 1))
    # the root has no in-edges, so only its own column may stay unmatched
    match = maximum_bipartite_matching(mat, perm_type="row")
    if (match[:n] < 0).any():
        return "no predecessor matching"
    k, labels = connected_components(mat, directed=True, connection="strong")
    if k > 1:
        comp = np.unique(labels[rows] * k + labels[cols])
        src, dst = comp // k, comp % k
        keep = src != dst
        src, dst = src[keep], dst[keep]
        indeg = np.bincount(dst, minlength=k)
        succ = [[] for _ in range(k)]
        for a, b in zip(src.tolist(), dst.tolist()):
            succ[a].append(b)
        frontier = np.flatnonzero(indeg == 0).tolist()
        while frontier:
            if len(frontier) > 1:
                return "component order not unique"
            c = frontier.pop()
            for b in succ[c]:
                indeg[b] -= 1
                if indeg[b] == 0:
                    frontier.append(b)
    return None


def out_lists(adj: np.ndarray) -> list[list[int]]:
    """Row-wise successor lists of a boolean adjacency matrix."""
    rows, cols = np.nonzero(adj)
    bounds = np.searchsorted(rows, np.arange(len(adj) + 1)).tolist()
    cols = cols.tolist()
    return [cols[bounds[i]:bounds[i + 1]] for i in range(len(adj))]


def hamiltonian_path_indexed(adj: np.ndarray, starts: Sequence[int], budget: int | None = None,
                             rng: np.random.Generator | None = None,
                             exact_limit: int = EXACT_HAMILTONIAN_LIMIT) -> list[int] | None:
    """Hamiltonian path over vertices 0..n-1 of ``adj`` from one of ``starts``.

    Cheap degree conditions and the matching/component certificate run first;
    then the randomized heuristic (``budget`` restarts, default
    n * ceil(log2 n)); graphs with at most ``exact_limit`` vertices fall back
    to the exact subset DP, so ``None`` is only inconclusive above that size.
    """
    adj = np.asarray(adj, dtype=bool)
    n = len(adj)
    starts = sorted(set(int(s) for s in starts))
    if n == 0 or not starts:
        return None
    if n == 1:
        return [0]
    sources = np.flatnonzero(~adj.any(axis=0))
    if len(sources) > 1 or int((~adj.any(axis=1)).sum()) > 1:
        return None
    if len(sources):
        if int(sources[0]) not in starts:
            return None
        starts = [int(sources[0])]
    if hamiltonian_obstruction(adj, starts) is not None:
        return None
    if rng is None:
        rng = np.random.default_rng(0)
    if budget is None:
        budget = n * math.ceil(math.log2(n))
    out = out_lists(adj)
    found = _ham_heuristic(out, starts, rng, budget, 2 * n)
    if found is not None:
        return found
    if n <= exact_limit:
        return hamiltonian_path_dp(DiGraph.from_matrix(adj), starts)
    return None


def find_hamiltonian_path(graph: DiGraph, start_candidates: Iterable[int] | None = None,
                          budget: int | None = None, rng: np.random.Generator | None = None,
                          exact_limit: int = EXACT_HAMILTONIAN_LIMIT) -> list[int] | None:
    """Hamiltonian path of ``graph`` starting at one of ``start_candidates``, or ``None``."""
    adj, nodes = graph.adjacency_matrix()
    rank = {v: i for i, v in enumerate(nodes)}
    if start_candidates is None:
        starts = list(range(len(nodes)))
    else:
        starts = [rank[s] for s in start_candidates if s in rank]
    found = hamiltonian_path_indexed(adj, starts, budget, rng, exact_limit)
    return None if found is None else [nodes[i] for i in found]


def is_hamiltonian_path(graph: DiGraph, path: Sequence[int]) -> bool:
    return (sorted(path) == sorted(graph.nodes)
            and all(graph.has_edge(a, b) for a, b in zip(path, path[1:])))


# ---------------------------------------------------------------------------
# subset-edge property

def _subset_masks(n: int, k: int) -> np.ndarray:
    return np.fromiter((sum(1 << i for i in c) for c in itertools.combinations(range(n), k)),
                       dtype=np.int64)


def check_subset_edge_property(graph: DiGraph, k: int, directed: bool = False) -> bool:
    """True iff every two disjoint k-subsets are joined by an edge.

    With ``directed=False`` an edge in either direction counts; with
    ``directed=True`` every ordered pair (S1, S2) needs an edge S1 -> S2, the
    form a directed DFS argument relies on.  Larger sets contain k-subsets, so
    checking size exactly k covers "size at least k".
    """
    n = len(graph)
    if n > BRUTEFORCE_LIMIT:
        raise GraphSizeError(f"exhaustive subset check limited to {BRUTEFORCE_LIMIT} vertices")
    if k < 1:
        raise ValueError("k must be positive")
    if 2 * k > n:
        return True
    nodes, out = _index_form(graph)
    out_mask = [sum(1 << w for w in nbrs) for nbrs in out]
    subs = _subset_masks(n, k)
    reach = np.zeros(len(subs), dtype=np.int64)
    for i in range(n):
        reach |= np.where((subs >> i) & 1 == 1, np.int64(out_mask[i]), np.int64(0))
    chunk = max(1, 4_000_000 // len(subs))
    for lo in range(0, len(subs), chunk):
        s1, r1 = subs[lo:lo + chunk, None], reach[lo:lo + chunk, None]
        disjoint = (s1 & subs[None, :]) == 0
        joined = (r1 & subs[None, :]) != 0
        if not directed:
            joined |= (reach[None, :] & s1) != 0
        if (disjoint & ~joined).any():
            return False
    return True
