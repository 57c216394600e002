"""Graph state of a single simulation run.

Node ``t`` is the patient-donor pair that arrives at time ``t`` (t >= 1).  The
altruistic donors sit at reserved ids: donor 0 is node 0 and donor ``r > 0``
is node ``-r``.  Donors only ever contribute out-edges and are never counted
as waiting.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .oracle import EdgeOracle

UNSET = -1
NO_CHAIN = -1

TRACE_FIELDS = ("step", "event_kind", "node_id", "chain_id", "path_length")


class SimulationError(RuntimeError):
    """A policy asked for something the model forbids; the run is aborted."""


class InvalidPathError(SimulationError):
    pass


class DoubleServiceError(SimulationError):
    pass


def donor_id(r: int) -> int:
    return -r


@dataclass(frozen=True, slots=True)
class NodeRecord:
    id: int
    arrival_time: int
    service_time: int = UNSET
    chain: int = NO_CHAIN

    @property
    def waiting_time(self) -> int | None:
        if self.service_time == UNSET:
            return None
        return self.service_time - self.arrival_time


@dataclass(slots=True)
class ChainState:
    chain_id: int
    path: list[int]

    @property
    def end(self) -> int:
        return self.path[-1]


@dataclass(frozen=True, slots=True)
class Event:
    step: int
    event_kind: str
    node_id: int
    chain_id: int
    path_length: int


class SimState:
    """Clock, waiting set, chains and event trace of one run.

    ``waiting`` preserves arrival order, so iterating it yields the
    longest-waiting node first.
    """

    def __init__(self, oracle: EdgeOracle, n_donors: int = 1, horizon: int = 0,
                 record_trace: bool = True) -> None:
        if n_donors < 1:
            raise ValueError("need at least one altruistic donor")
        self.oracle = oracle
        self.clock = 0
        self.chains = [ChainState(r, [donor_id(r)]) for r in range(n_donors)]
        self.waiting: dict[int, None] = {}
        self.record_trace = record_trace
        self.trace: list[Event] = []
        self.extensions: list[tuple[int, int, tuple[int, ...]]] = []
        cap = max(horizon, 16) + 1
        self._service = np.full(cap, UNSET, dtype=np.int64)
        self._chain_of = np.full(cap, NO_CHAIN, dtype=np.int32)
        self._queue = np.zeros(cap, dtype=np.int64)
        self._served = 0
        self._waiting_array: np.ndarray | None = None
        self.horizon: int | None = None
        self._checked: dict[int, int] = {}

    # -- read access -------------------------------------------------------

    @property
    def p(self) -> float:
        return self.oracle.p

    @property
    def n_chains(self) -> int:
        return len(self.chains)

    def end(self, chain_id: int = 0) -> int:
        return self.chains[chain_id].path[-1]

    @property
    def served_count(self) -> int:
        return self._served

    def waiting_array(self) -> np.ndarray:
        """Waiting node ids, oldest first (cached until the waiting set changes)."""
        if self._waiting_array is None:
            self._waiting_array = np.fromiter(self.waiting, dtype=np.int64,
                                              count=len(self.waiting))
        return self._waiting_array

    def is_waiting(self, v: int) -> bool:
        return v in self.waiting

    def record(self, v: int) -> NodeRecord:
        if not 1 <= v <= self.clock:
            raise KeyError(f"node {v} has not arrived")
        return NodeRecord(v, v, int(self._service[v]), int(self._chain_of[v]))

    @property
    def service_times(self) -> np.ndarray:
        return self._service[1:self.clock + 1]

    @property
    def chain_membership(self) -> np.ndarray:
        return self._chain_of[1:self.clock + 1]

    @property
    def queue_trace(self) -> np.ndarray:
        """q_tau for tau = 1..clock, counting nodes with t <= tau < a_t."""
        return self._queue[1:self.clock + 1]

    # -- transitions -------------------------------------------------------

    def _grow(self) -> None:
        extra = len(self._service)
        self._service = np.concatenate([self._service, np.full(extra, UNSET, np.int64)])
        self._chain_of = np.concatenate([self._chain_of, np.full(extra, NO_CHAIN, np.int32)])
        self._queue = np.concatenate([self._queue, np.zeros(extra, np.int64)])

    def arrive(self) -> int:
        """Advance the clock by one and add the newcomer to the waiting set."""
        if self.horizon is not None:
            raise SimulationError("run already finalized")
        self.clock += 1
        v = self.clock
        if v >= len(self._service):
            self._grow()
        self.waiting[v] = None
        self._waiting_array = None
        if self.record_trace:
            self.trace.append(Event(v, "arrival", v, NO_CHAIN, 0))
        return v

    def extend_chain(self, chain_id: int, nodes: Sequence[int]) -> None:
        """Append ``nodes`` to a chain, serving them at the current clock."""
        if not nodes:
            raise InvalidPathError("empty extension")
        chain = self.chains[chain_id]
        seen = set()
        for v in nodes:
            if v not in self.waiting or v in seen:
                raise DoubleServiceError(f"node {v} is not waiting")
            seen.add(v)
        src = np.fromiter([chain.end, *nodes[:-1]], dtype=np.int64, count=len(nodes))
        ok = self.oracle.edges(src, np.asarray(nodes, dtype=np.int64))
        if not ok.all():
            i = int(np.argmin(ok))
            raise InvalidPathError(f"chain {chain_id}: no edge {src[i]} -> {nodes[i]}")
        for v in nodes:
            del self.waiting[v]
        self._waiting_array = None
        idx = np.asarray(nodes, dtype=np.int64)
        self._service[idx] = self.clock
        self._chain_of[idx] = chain_id
        chain.path.extend(nodes)
        self._served += len(nodes)
        self.extensions.append((self.clock, chain_id, tuple(nodes)))
        if self.record_trace:
            self.trace.append(Event(self.clock, "extension", chain.end, chain_id, len(nodes)))

    def close_step(self) -> None:
        """Record q at the current clock; call once per step after the policy ran."""
        self._queue[self.clock] = len(self.waiting)

    def finalize(self, T: int) -> None:
        """Set every unserved a_t to T.  Under the half-open queue convention
        this zeroes q_T, keeping sum(w) == sum(q) exact."""
        if self.clock != T:
            raise SimulationError(f"finalize at T={T} but clock is {self.clock}")
        svc = self._service[1:T + 1]
        svc[svc == UNSET] = T
        self._queue[T] = 0
        self.horizon = T

    # -- checks ------------------------------------------------------------

    def check_invariants(self) -> None:
        """Conservation, oracle validity of every chain and node-disjointness.

        Edges are pure functions of the oracle, so segments verified by an
        earlier call are not re-queried.
        """
        if len(self.waiting) + self._served != self.clock:
            raise SimulationError(
                f"conservation broken: |Q|={len(self.waiting)} served={self._served} "
                f"clock={self.clock}")
        for chain in self.chains:
            path = chain.path
            lo = self._checked.get(chain.chain_id, 0)
            if len(path) - lo > 1:
                seg = np.asarray(path[lo:], dtype=np.int64)
                if not self.oracle.edges(seg[:-1], seg[1:]).all():
                    raise InvalidPathError(f"chain {chain.chain_id} is not an oracle path")
            for v in path[max(lo, 1):]:
                if v in self.waiting or self._chain_of[v] != chain.chain_id:
                    raise SimulationError(f"node {v} appears twice")
            self._checked[chain.chain_id] = len(path) - 1
        on_chain = sum(len(c.path) - 1 for c in self.chains)
        if on_chain != self._served:
            raise SimulationError("chains and service counts disagree")

    # -- export ------------------------------------------------------------

    def write_trace(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_FIELDS)
        for ev in self.trace:
            writer.writerow((ev.step, ev.event_kind, ev.node_id, ev.chain_id, ev.path_length))

    def trace_csv(self) -> str:
        buf = io.StringIO()
        self.write_trace(buf)
        return buf.getvalue()

