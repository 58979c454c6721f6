from __future__ import annotations

import math

import numpy as np

from boxfinder.search.trace import SearchResult, SearchTrace


def hill_climbing(objective, compat, budget: int | None = None) -> SearchResult:
    """Greedy forward selection.

    Every round evaluates each still-compatible proposal added to the current
    solution and keeps the best one if it lowers the loss. Proposals that
    clash with the solution are dropped from the pool. Stops when nothing
    improves, nothing is left, or ``budget`` evaluations are spent.

    The trace reports the committed solution, which only changes at the end
    of a round; before the first commit it is the empty-set loss.
    """
    n = len(objective)
    bits = compat.bits
    empty = getattr(objective, "empty", math.inf)
    trace = SearchTrace("hc")
    solution: list[int] = []
    best = empty
    blocked = np.zeros(n, dtype=bool)
    avail = list(range(n))
    evals = 0
    exhausted = False
    while avail and not exhausted:
        round_best, round_id = math.inf, None
        keep = []
        for s in avail:
            if blocked[s]:
                continue
            if budget is not None and evals >= budget:
                exhausted = True
                break
            loss = objective(solution + [s])
            evals += 1
            trace.add(loss, best, len(solution))
            if loss < round_best:
                round_best, round_id = loss, s
            keep.append(s)
        if round_id is None or not round_best < best:
            break
        solution.append(round_id)
        best = round_best
        blocked |= ~bits[round_id]
        avail = [s for s in keep if s != round_id]
        trace.amend_last(best, len(solution))
    return SearchResult("hc", tuple(sorted(solution)), best, evals, trace)
