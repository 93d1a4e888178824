"""Pareto ranking of search sites: maximise informativeness, minimise cost."""

import numpy as np

from placekit.app.errors import ShapeMismatch
from placekit.app.models.placement import ParetoPoint


def _dominates(info_p: float, cost_p: float, info_q: float, cost_q: float) -> bool:
    return info_p >= info_q and cost_p <= cost_q and (info_p > info_q or cost_p < cost_q)


def pareto_fronts(informativeness: object, cost: object) -> list[list[int]]:
    """Non-dominated fronts of the sites, best first.

    Uses the fast non-dominated sort: each site keeps the list of sites it
    dominates and a count of sites dominating it. Duplicates share a front.
    """
    info = np.asarray(informativeness, dtype=np.float64).reshape(-1)
    costs = np.asarray(cost, dtype=np.float64).reshape(-1)
    if info.shape != costs.shape:
        raise ShapeMismatch(f"{info.size} informativeness values but {costs.size} costs")
    if not (np.all(np.isfinite(info)) and np.all(np.isfinite(costs))):
        raise ShapeMismatch("objectives must be finite")

    n = info.size
    dominated: list[list[int]] = [[] for _ in range(n)]
    counts = [0] * n
    for p in range(n):
        for q in range(p + 1, n):
            if _dominates(info[p], costs[p], info[q], costs[q]):
                dominated[p].append(q)
                counts[q] += 1
            elif _dominates(info[q], costs[q], info[p], costs[p]):
                dominated[q].append(p)
                counts[p] += 1

    fronts: list[list[int]] = []
    current = [p for p in range(n) if counts[p] == 0]
    while current:
        fronts.append(current)
        following: list[int] = []
        for p in current:
            for q in dominated[p]:
                counts[q] -= 1
                if counts[q] == 0:
                    following.append(q)
        current = sorted(following)
    return fronts


def pareto_ranks(informativeness: object, cost: object) -> list[ParetoPoint]:
    """Rank every site; rank 1 is the non-dominated front."""
    fronts = pareto_fronts(informativeness, cost)
    info = np.asarray(informativeness, dtype=np.float64).reshape(-1)
    costs = np.asarray(cost, dtype=np.float64).reshape(-1)
    rank = np.zeros(info.size, dtype=int)
    for level, front in enumerate(fronts, start=1):
        rank[front] = level
    return [
        ParetoPoint(
            index=i, informativeness=float(info[i]), cost=float(costs[i]), rank=int(rank[i])
        )
        for i in range(info.size)
    ]
