from __future__ import annotations

import numpy as np

from neadchain.model import SimState
from neadchain.oracle import EdgeOracle


class TableOracle(EdgeOracle):
    """Oracle answering exactly the listed ordered pairs."""

    def __init__(self, edges, p: float = 0.5):
        super().__init__(0, p)
        self.table = set(edges)

    def edge_exists(self, u, v):
        return (u, v) in self.table

    def edges(self, us, vs):
        u, v = np.broadcast_arrays(np.asarray(us, dtype=np.int64), np.asarray(vs, dtype=np.int64))
        out = np.zeros(u.shape, dtype=bool)
        for idx in np.ndindex(u.shape):
            out[idx] = (int(u[idx]), int(v[idx])) in self.table
        return out


def run_steps(policy, oracle, T, n_donors=1):
    """Drive ``policy`` for T arrivals; returns the state and per-step extensions."""
    state = SimState(oracle, n_donors=n_donors)
    steps = []
    for _ in range(T):
        state.arrive()
        ext = sorted(policy.step(state), key=lambda e: e[0])
        for chain, nodes in ext:
            state.extend_chain(chain, nodes)
        state.close_step()
        steps.append(ext)
    return state, steps


# acceptance verdicts, echoed in the terminal summary by conftest.py
VERDICTS: list[str] = []


def verdict(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)
