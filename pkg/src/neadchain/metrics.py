"""Waiting-time and queue statistics of finalized runs, and scaling-law fits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import UNSET, SimState

ONE_OVER_P = "one_over_p"
ONE_OVER_P_LOG = "one_over_p_log"


class UnfinalizedRunError(ValueError):
    pass


@dataclass
class RunSummary:
    T: int
    waits: np.ndarray
    queue: np.ndarray
    served: np.ndarray
    burn_in: int
    mean_wait: float
    mean_wait_all: float
    mean_wait_served: float
    mean_queue: float
    median_wait: float
    quantiles: dict[str, float]
    unserved: int
    extras: dict = field(default_factory=dict)

    def scalars(self) -> dict:
        return {
            "T": self.T,
            "burn_in": self.burn_in,
            "mean_wait": self.mean_wait,
            "mean_wait_all": self.mean_wait_all,
            "mean_wait_served": self.mean_wait_served,
            "mean_queue": self.mean_queue,
            "median_wait": self.median_wait,
            "quantiles": dict(self.quantiles),
            "unserved": self.unserved,
            "sum_wait": int(self.waits.sum()),
            "sum_queue": int(self.queue.sum()),
        }


def upper_quantile(values: np.ndarray, delta: float) -> float:
    """Smallest observed w with fewer than a delta fraction of values above it
    (rank floor((1 - delta) n) + 1 in sorted order)."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    w = np.sort(np.asarray(values))
    if not len(w):
        raise ValueError("empty sample")
    rank = math.floor((1.0 - delta) * len(w) + 1e-9)
    return float(w[min(rank, len(w) - 1)])


def compute_summary(state: SimState, T: int | None = None, burn_in: float = 0.2,
                    extras: dict | None = None) -> RunSummary:
    """Summary of a finalized run; asserts sum(w) == sum(q) exactly."""
    if state.horizon is None:
        raise UnfinalizedRunError("run has not been finalized")
    T = state.horizon if T is None else T
    if T != state.horizon:
        raise UnfinalizedRunError(f"run finalized at {state.horizon}, not {T}")
    service = state.service_times
    if (service == UNSET).any():
        raise UnfinalizedRunError("unset service times")
    arrivals = np.arange(1, T + 1)
    waits = service - arrivals
    queue = state.queue_trace.copy()
    if int(waits.sum()) != int(queue.sum()):
        raise AssertionError(f"sum(w)={waits.sum()} != sum(q)={queue.sum()}")
    served = state.chain_membership >= 0
    b = int(burn_in * T)
    post = waits[b:]
    qs = {f"{q:g}": float(np.quantile(post, q)) for q in (0.5, 0.9, 0.99)}
    return RunSummary(
        T=T, waits=waits, queue=queue, served=served, burn_in=b,
        mean_wait=float(post.mean()),
        mean_wait_all=float(waits.mean()),
        mean_wait_served=float(waits[served].mean()) if served.any() else float("nan"),
        mean_queue=float(queue[b:].mean()),
        median_wait=float(np.median(post)),
        quantiles=qs,
        unserved=int((~served).sum()),
        extras=dict(extras or {}),
    )


def per_node_tail(summary: RunSummary, delta: float) -> float:
    """Empirical waiting-time bound omega with P[w > omega] < delta."""
    return upper_quantile(summary.waits, delta)


def additional_wait(state: SimState, tau: int) -> float:
    """Mean of a_t - tau over nodes still waiting at tau (t <= tau < a_t)."""
    service = state.service_times
    arrivals = np.arange(1, len(service) + 1)
    waiting = (arrivals <= tau) & (service > tau)
    if not waiting.any():
        return 0.0
    return float((service[waiting] - tau).mean())


def _basis(p: np.ndarray, model: str) -> np.ndarray:
    if model == ONE_OVER_P:
        return 1.0 / p
    if model == ONE_OVER_P_LOG:
        return np.log(1.0 / p) / p
    raise ValueError(f"unknown model {model!r}")


def fit_scaling(points: Iterable[tuple[float, float]], model: str) -> tuple[float, float]:
    """Least-squares a for y = a g(p); returns (a, max relative residual)."""
    pts = list(points)
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    p = np.array([x for x, _ in pts], dtype=float)
    y = np.array([v for _, v in pts], dtype=float)
    if len(np.unique(p)) != len(p):
        raise ValueError("p values must be distinct")
    g = _basis(p, model)
    a = float(g @ y / (g @ g))
    fitted = a * g
    return a, float(np.max(np.abs(y - fitted) / fitted))


def write_pernode_csv(summary: RunSummary, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(("node", "wait", "served"))
    for t, (w, s) in enumerate(zip(summary.waits.tolist(), summary.served.tolist()), start=1):
        writer.writerow((t, w, int(s)))


def aggregate(summaries: Sequence[RunSummary]) -> dict:
    """Across-replication mean and 95% normal CI of the main scalars."""
    out: dict = {"replications": len(summaries)}
    for key in ("mean_wait", "mean_wait_all", "mean_wait_served", "mean_queue", "median_wait"):
        vals = np.array([getattr(s, key) for s in summaries], dtype=float)
        mean = float(vals.mean())
        half = float(1.96 * vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        out[key] = mean
        out[f"{key}_ci95"] = [mean - half, mean + half]
    for q in summaries[0].quantiles:
        out[f"wait_q{q}"] = float(np.mean([s.quantiles[q] for s in summaries]))
    return out
