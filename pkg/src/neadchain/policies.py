"""Online chain-extension policies.

Every policy has the same contract: after each arrival, ``step(state)`` looks
at the (read-only) state and returns the extensions to commit this step as
``(chain_id, nodes)`` pairs.  The simulator validates and commits them in
chain-id order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import pathfind
from .model import SimState

Extension = tuple[int, list[int]]


def phase_length(c: float, p: float) -> int:
    """theta = ceil(c / p), guarded against float noise (12 / 0.1 is 120.00000000000001)."""
    return max(1, math.ceil(c / p - 1e-9))


def greedy_walk(state: SimState, first: int) -> list[int]:
    """Chain nodes appended by Greedy once ``first`` is matched: keep moving to
    the longest-waiting out-neighbor until the current node has none."""
    walk = [first]
    queue = state.waiting_array()
    alive = queue != first
    oracle = state.oracle
    x = first
    while True:
        hits = np.flatnonzero(alive & oracle.edges(x, queue))
        if not len(hits):
            return walk
        i = hits[0]
        x = int(queue[i])
        alive[i] = False
        walk.append(x)


@dataclass
class PhaseState:
    index: int = 0
    start: int = 0
    V_fp: list[int] = field(default_factory=list)
    Q_snapshot: list[int] = field(default_factory=list)
    theta: int = 0
    c: float = 0.0


class Policy:
    name = "policy"

    def step(self, state: SimState) -> list[Extension]:
        raise NotImplementedError

    def check_post_step(self, state: SimState) -> None:
        """Policy-specific invariants, run by the simulator in checked mode."""

    def extras(self) -> dict:
        return {}


class Greedy(Policy):
    """Longest-waiting-first greedy.  With several donors the arrival goes to
    the lowest-indexed chain whose end points at it (or a uniformly random
    one with ``tie_break="random"``), which then keeps extending greedily."""

    name = "greedy"

    def __init__(self, tie_break: str = "lowest", rng: np.random.Generator | None = None) -> None:
        if tie_break not in ("lowest", "random"):
            raise ValueError(f"unknown tie-break {tie_break!r}")
        self.tie_break = tie_break
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def step(self, state: SimState) -> list[Extension]:
        v = state.clock
        edge = state.oracle.edge_exists
        # scalar probes: a handful of chains is far cheaper than one vector call
        able = [ch.chain_id for ch in state.chains if edge(ch.end, v)]
        if not able:
            return []
        if self.tie_break == "random" and len(able) > 1:
            chain = able[int(self.rng.integers(len(able)))]
        else:
            chain = able[0]
        return [(chain, greedy_walk(state, v))]

    def check_post_step(self, state: SimState) -> None:
        queue = state.waiting_array()
        for ch in state.chains:
            if len(queue) and state.oracle.edges(ch.end, queue).any():
                raise AssertionError(f"greedy left chain {ch.chain_id} with an edge into the queue")


def greedy_step(state: SimState) -> list[Extension]:
    return Greedy().step(state)


def multi_greedy_step(state: SimState, tie_break: str = "lowest",
                      rng: np.random.Generator | None = None) -> list[Extension]:
    return Greedy(tie_break, rng).step(state)


class ClearAll(Policy):
    """Wait until the waiting set has a Hamiltonian path that the chain end can
    enter, then serve all of it at once.

    The waiting set only grows between clears, so in/out degrees inside it are
    maintained incrementally.  The search runs only when the degree conditions
    a Hamiltonian path needs (at most one source, which must be enterable from
    the end; at most one sink) are met.
    """

    name = "clear_all"

    def __init__(self, rng: np.random.Generator | None = None, budget: int | None = None) -> None:
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.budget = budget
        self._reset(0)
        self.clear_steps: list[int] = []
        self.clear_sizes: list[int] = []
        self.searches = 0

    def _reset(self, end: int) -> None:
        self.end = end
        self.members: list[int] = []
        self.adj = np.zeros((64, 64), dtype=bool)
        self.indeg = np.zeros(64, dtype=np.int64)
        self.outdeg = np.zeros(64, dtype=np.int64)
        self.enterable = np.zeros(64, dtype=bool)

    def _add(self, state: SimState, v: int) -> None:
        n = len(self.members)
        if n == len(self.indeg):
            cap = 2 * n
            adj = np.zeros((cap, cap), dtype=bool)
            adj[:n, :n] = self.adj
            self.adj = adj
            self.indeg = np.resize(self.indeg, cap)
            self.outdeg = np.resize(self.outdeg, cap)
            self.enterable = np.resize(self.enterable, cap)
        old = np.asarray(self.members, dtype=np.int64)
        out, inc = state.oracle.both_ways(v, old)
        self.adj[n, :n] = out
        self.adj[:n, n] = inc
        self.indeg[:n] += out
        self.outdeg[:n] += inc
        self.indeg[n] = inc.sum()
        self.outdeg[n] = out.sum()
        self.enterable[n] = state.oracle.edge_exists(self.end, v)
        self.members.append(v)

    def _plausible(self) -> bool:
        n = len(self.members)
        enter = self.enterable[:n]
        if not enter.any():
            return False
        if n == 1:
            return True
        sources = np.flatnonzero(self.indeg[:n] == 0)
        if len(sources) > 1 or (len(sources) == 1 and not enter[sources[0]]):
            return False
        return int((self.outdeg[:n] == 0).sum()) <= 1

    def step(self, state: SimState) -> list[Extension]:
        if state.end() != self.end:
            self._reset(state.end())
            for v in state.waiting:
                self._add(state, v)
        else:
            self._add(state, state.clock)
        if not self._plausible():
            return []
        n = len(self.members)
        starts = np.flatnonzero(self.enterable[:n]).tolist()
        self.searches += 1
        # a miss only delays the clear to a later arrival, so each check is cheap
        budget = self.budget or 4 * math.ceil(math.log2(max(n, 2)))
        found = pathfind.hamiltonian_path_indexed(self.adj[:n, :n], starts, budget, self.rng)
        if found is None:
            return []
        path = [self.members[i] for i in found]
        self.clear_steps.append(state.clock)
        self.clear_sizes.append(n)
        self._reset(path[-1])
        return [(0, path)]

    def check_post_step(self, state: SimState) -> None:
        if self.clear_steps and self.clear_steps[-1] == state.clock and state.waiting:
            raise AssertionError("CLEAR-ALL extension left nodes waiting")

    def extras(self) -> dict:
        gaps = np.diff([0, *self.clear_steps])
        return {"clears": len(self.clear_steps), "clear_steps": list(self.clear_steps),
                "clear_intervals": gaps.tolist(), "clear_sizes": list(self.clear_sizes),
                "hamiltonian_searches": self.searches}


def clear_all_step(state: SimState, policy: ClearAll) -> list[Extension]:
    return policy.step(state)


def fair_path_extension(state: SimState, Q, V_fp, rng: np.random.Generator) -> list[int]:
    """One FAIR-PATH run from the current chain end (empty list = no extension)."""
    graph = pathfind.build_fair_path_graph(Q, V_fp, state.end(), state.oracle, rng)
    if graph.empty_extension:
        return []
    path = pathfind.dfs_longest_observed(graph, graph.start)
    return pathfind.expand_labeled_path(graph, path)


class Batch(Policy):
    """Wait for ceil(c/p) arrivals, then extend once by FAIR-PATH + DFS-LP."""

    name = "batch"

    def __init__(self, c: float, p: float, rng: np.random.Generator | None = None) -> None:
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.phase = PhaseState(theta=phase_length(c, p), c=c)
        self.phase_closes: list[int] = []
        self.extension_lengths: list[int] = []

    def step(self, state: SimState) -> list[Extension]:
        ph = self.phase
        ph.V_fp.append(state.clock)
        if len(ph.V_fp) < ph.theta:
            return []
        nodes = fair_path_extension(state, ph.Q_snapshot, ph.V_fp, self.rng)
        self.phase_closes.append(state.clock)
        self.extension_lengths.append(len(nodes))
        served = set(nodes)
        self.phase = PhaseState(
            index=ph.index + 1, start=state.clock, theta=ph.theta, c=ph.c,
            Q_snapshot=[v for v in (*ph.Q_snapshot, *ph.V_fp) if v not in served])
        return [(0, nodes)] if nodes else []

    def check_post_step(self, state: SimState) -> None:
        k = len(self.phase_closes)
        if k and self.phase_closes[-1] != k * self.phase.theta:
            raise AssertionError("batch phase closed off schedule")
        if set(self.phase.Q_snapshot) & set(self.phase.V_fp):
            raise AssertionError("phase sets overlap")

    def extras(self) -> dict:
        return {"phases": len(self.phase_closes), "phase_closes": list(self.phase_closes),
                "extension_lengths": list(self.extension_lengths)}


def batch_step(state: SimState, policy: Batch) -> list[Extension]:
    return policy.step(state)


class GreedyBatch(Policy):
    """Batch phases, but a matchable arrival (one the chain end points at) is
    always served at once: by Greedy while the phase holds fewer than c/p new
    nodes, by FAIR-PATH (which closes the phase) afterwards."""

    name = "greedy_batch"

    def __init__(self, c: float, p: float, rng: np.random.Generator | None = None) -> None:
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.theta = phase_length(c, p)
        self.c = c
        self.phase = PhaseState(theta=self.theta, c=c)
        self.phase_closes: list[int] = []
        self.greedy_runs = 0
        self.fair_path_runs = 0
        self.extension_lengths: list[int] = []
        self.responsive = True
        self.last_greedy = -1

    def step(self, state: SimState) -> list[Extension]:
        ph = self.phase
        v = state.clock
        ph.V_fp.append(v)
        if not state.oracle.edge_exists(state.end(), v):
            return []
        if len(ph.V_fp) < ph.theta:
            nodes = greedy_walk(state, v)
            self.greedy_runs += 1
            self.last_greedy = v
            served = set(nodes)
            ph.V_fp = [u for u in ph.V_fp if u not in served]
            ph.Q_snapshot = [u for u in ph.Q_snapshot if u not in served]
        else:
            nodes = fair_path_extension(state, ph.Q_snapshot, ph.V_fp, self.rng)
            self.fair_path_runs += 1
            served = set(nodes)
            self.phase_closes.append(v)
            self.phase = PhaseState(
                index=ph.index + 1, start=v, theta=ph.theta, c=ph.c,
                Q_snapshot=[u for u in (*ph.Q_snapshot, *ph.V_fp) if u not in served])
        if not nodes:
            self.responsive = False
        self.extension_lengths.append(len(nodes))
        return [(0, nodes)] if nodes else []

    def check_post_step(self, state: SimState) -> None:
        if not self.responsive:
            raise AssertionError("matchable arrival left unmatched")
        if self.last_greedy == state.clock:
            queue = state.waiting_array()
            if len(queue) and state.oracle.edges(state.end(), queue).any():
                raise AssertionError("greedy sub-run left an edge into the queue")

    def extras(self) -> dict:
        return {"phases": len(self.phase_closes), "phase_closes": list(self.phase_closes),
                "greedy_runs": self.greedy_runs, "fair_path_runs": self.fair_path_runs,
                "extension_lengths": list(self.extension_lengths)}


def greedy_batch_step(state: SimState, policy: GreedyBatch) -> list[Extension]:
    return policy.step(state)


class NASP(Policy):
    """Not-A-Short-Path: end a phase only with an extension of >= ceil(c/p) nodes.

    Each check runs DFS-LP from the chain end on two candidate graphs over the
    phase's new arrivals, the FAIR-PATH contraction of the old waiting nodes
    and the plain graph among the new arrivals, and keeps the longer expanded
    path.  A failed check of best length L defers the next one by
    ceil((theta - L) / 2) arrivals.  This is pacing, not a guarantee: the
    direct-graph path grows by at most one node per arrival, but re-sampled
    labels can lengthen the FAIR-PATH candidate faster.  ``every_arrival``
    checks after every arrival instead.
    """

    name = "nasp"

    def __init__(self, c: float, p: float, rng: np.random.Generator | None = None,
                 every_arrival: bool = False) -> None:
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.theta = phase_length(c, p)
        self.c = c
        self.every_arrival = every_arrival
        self.phase = PhaseState(theta=self.theta, c=c)
        self.builder: pathfind.IncrementalFairPath | None = None
        self.next_check = 1
        self.phase_closes: list[int] = []
        self.phase_durations: list[int] = []
        self.extension_lengths: list[int] = []
        self.checks = 0

    def candidate(self) -> list[int]:
        b = self.builder
        best: list[int] = []
        if any(b.end_out):
            for graph in (b.labeled_graph(), b.direct_graph()):
                nodes = pathfind.expand_labeled_path(
                    graph, pathfind.dfs_longest_observed(graph, graph.start))
                if len(nodes) > len(best):
                    best = nodes
        return best

    def step(self, state: SimState) -> list[Extension]:
        ph = self.phase
        if self.builder is None:
            self.builder = pathfind.IncrementalFairPath(ph.Q_snapshot, state.end(),
                                                        state.oracle, self.rng)
        v = state.clock
        ph.V_fp.append(v)
        self.builder.add(v)
        n = len(ph.V_fp)
        if n < self.next_check:
            return []
        self.checks += 1
        nodes = self.candidate()
        if len(nodes) < ph.theta:
            gap = ph.theta - len(nodes)
            self.next_check = n + (1 if self.every_arrival else max(1, math.ceil(gap / 2)))
            return []
        self.phase_closes.append(v)
        self.phase_durations.append(n)
        self.extension_lengths.append(len(nodes))
        served = set(nodes)
        self.phase = PhaseState(
            index=ph.index + 1, start=v, theta=ph.theta, c=ph.c,
            Q_snapshot=[u for u in (*ph.Q_snapshot, *ph.V_fp) if u not in served])
        self.builder = None
        self.next_check = 1
        return [(0, nodes)]

    def check_post_step(self, state: SimState) -> None:
        if self.extension_lengths and min(self.extension_lengths) < self.theta:
            raise AssertionError("NASP committed a short extension")

    def extras(self) -> dict:
        return {"phases": len(self.phase_closes), "phase_closes": list(self.phase_closes),
                "phase_durations": list(self.phase_durations),
                "extension_lengths": list(self.extension_lengths), "checks": self.checks}


def nasp_step(state: SimState, policy: NASP) -> list[Extension]:
    return policy.step(state)


POLICIES = {
    "greedy": Greedy,
    "clear_all": ClearAll,
    "batch": Batch,
    "greedy_batch": GreedyBatch,
    "nasp": NASP,
}


def make_policy(name: str, p: float, rng: np.random.Generator, c: float | None = None,
                tie_break: str = "lowest", nasp_every_arrival: bool = False) -> Policy:
    name = name.replace("-", "_").lower()
    if name in ("greedy", "multi_greedy"):
        return Greedy(tie_break, rng)
    if name == "clear_all":
        return ClearAll(rng)
    if name == "batch":
        return Batch(12.0 if c is None else c, p, rng)
    if name == "greedy_batch":
        return GreedyBatch(12.0 if c is None else c, p, rng)
    if name == "nasp":
        return NASP(120.0 if c is None else c, p, rng, every_arrival=nasp_every_arrival)
    raise ValueError(f"unknown policy {name!r}")
