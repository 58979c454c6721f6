"""Order-invariant UCB search over proposal subsets.

Every proposal keeps two bandit arms: "selected" and "rejected". An
iteration walks the pool in decreasing selected-confidence order, builds a
compatible subset by comparing the two arms of each proposal, evaluates it
once, and updates the arms of *every* proposal with that single loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from boxfinder.search.trace import SearchResult, SearchTrace
from boxfinder.seeding import substream


@dataclass
class MbfParams:
    p_eps: float = 0.3
    delta: float = 0.03
    budget: int = 1000
    n_init: int = 10
    seed: int = 0
    # count the random initial traversals against the budget
    init_counts: bool = True
    # False: p_eps is the probability of exploring (adding when mu1 < mu0),
    # otherwise add when mu1 > mu0. True: the branches exactly as they are
    # usually written, greedy with probability p_eps.
    literal_branches: bool = False

    def __post_init__(self):
        if not 0 <= self.p_eps <= 1:
            raise ValueError("p_eps must lie in [0, 1]")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.n_init < 0:
            raise ValueError("n_init must be >= 0")


def ucb_pair(best_loss: float, n: int, delta: float) -> float:
    """-best_loss + sqrt(ln(1/delta) / n)."""
    if n < 1:
        raise ValueError("n must be >= 1; unvisited arms are treated as +inf by the caller")
    return -best_loss + math.sqrt(math.log(1.0 / delta) / n)


@dataclass
class ProposalState:
    l0: float
    l1: float
    n0: int
    n1: int
    mu0: float
    mu1: float


class ProposalStates:
    """Vectorised per-proposal statistics. Unvisited arms have loss +inf and
    confidence +inf."""

    def __init__(self, n: int):
        self.l0 = np.full(n, np.inf)
        self.l1 = np.full(n, np.inf)
        self.n0 = np.zeros(n, dtype=np.int64)
        self.n1 = np.zeros(n, dtype=np.int64)
        self.mu0 = np.full(n, np.inf)
        self.mu1 = np.full(n, np.inf)

    def __len__(self) -> int:
        return len(self.l0)

    def __getitem__(self, i) -> ProposalState:
        return ProposalState(
            float(self.l0[i]), float(self.l1[i]), int(self.n0[i]), int(self.n1[i]),
            float(self.mu0[i]), float(self.mu1[i]),
        )


def mbf_simulate(order, compat, states: ProposalStates, p_eps: float, rng, swap_branches: bool = False) -> list[int]:
    """Walk ``order``; for each proposal still compatible with the picks so
    far draw eps ~ U[0, 1). With eps < p_eps add it if mu1 > mu0, otherwise
    add it if mu1 < mu0."""
    bits = compat.bits
    blocked = np.zeros(len(states), dtype=bool)
    mu0, mu1 = states.mu0, states.mu1
    picked: list[int] = []
    for s in order:
        s = int(s)
        if blocked[s]:
            continue
        first = rng.random() < p_eps
        if first != swap_branches:
            add = mu1[s] > mu0[s]
        else:
            add = mu1[s] < mu0[s]
        if add:
            picked.append(s)
            blocked |= ~bits[s]
    return picked


def mbf_update(states: ProposalStates, selected, loss: float, delta: float) -> ProposalStates:
    """Update both arms of every proposal with one evaluated loss."""
    if not math.isfinite(loss):
        raise ValueError("loss must be finite")
    bonus = math.log(1.0 / delta)
    sel = np.zeros(len(states), dtype=bool)
    sel[list(selected)] = True
    rej = ~sel
    states.l1[sel] = np.minimum(states.l1[sel], loss)
    states.n1[sel] += 1
    states.mu1[sel] = -states.l1[sel] + np.sqrt(bonus / states.n1[sel])
    states.l0[rej] = np.minimum(states.l0[rej], loss)
    states.n0[rej] += 1
    states.mu0[rej] = -states.l0[rej] + np.sqrt(bonus / states.n0[rej])
    return states


def confidence_order(states: ProposalStates) -> np.ndarray:
    """Proposal ids by decreasing mu1, ties by id."""
    return np.lexsort((np.arange(len(states)), -states.mu1))


def monteboxfinder(objective, compat, params: MbfParams | None = None, states: ProposalStates | None = None) -> SearchResult:
    params = params or MbfParams()
    rng = substream(params.seed, "search", "mbf")
    n = len(objective)
    states = states if states is not None else ProposalStates(n)
    trace = SearchTrace("mbf")
    best, best_set = math.inf, ()
    total = params.budget if params.init_counts else params.budget + params.n_init
    for it in range(total):
        order = rng.permutation(n) if it < params.n_init else confidence_order(states)
        cand = mbf_simulate(order, compat, states, params.p_eps, rng, swap_branches=not params.literal_branches)
        loss = objective(cand)
        mbf_update(states, cand, loss, params.delta)
        if loss < best:
            best, best_set = loss, tuple(sorted(cand))
        trace.add(loss, best, len(best_set))
    return SearchResult("mbf", best_set, best, total, trace)
