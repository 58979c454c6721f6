from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

CSV_HEADER = ("eval_index", "candidate_loss", "best_loss", "solution_size", "millis")


@dataclass
class SearchTrace:
    """One row per objective evaluation.

    ``best_loss`` is the loss of the solution the method would return at that
    point, ``solution_size`` its cuboid count.
    """

    method: str = ""
    eval_index: list = field(default_factory=list)
    candidate_loss: list = field(default_factory=list)
    best_loss: list = field(default_factory=list)
    solution_size: list = field(default_factory=list)
    millis: list = field(default_factory=list)

    def __post_init__(self):
        self._t0 = time.perf_counter()

    def __len__(self) -> int:
        return len(self.eval_index)

    def add(self, candidate_loss: float, best_loss: float, solution_size: int) -> None:
        self.eval_index.append(len(self.eval_index) + 1)
        self.candidate_loss.append(float(candidate_loss))
        self.best_loss.append(float(best_loss))
        self.solution_size.append(int(solution_size))
        self.millis.append((time.perf_counter() - self._t0) * 1000.0)

    def amend_last(self, best_loss: float, solution_size: int) -> None:
        self.best_loss[-1] = float(best_loss)
        self.solution_size[-1] = int(solution_size)

    @property
    def final_best(self) -> float:
        return self.best_loss[-1] if self.best_loss else math.inf

    def write_csv(self, path, timing: bool = False) -> None:
        """Wall-clock times are only written with ``timing=True`` so that
        default output is reproducible byte for byte."""
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for k in range(len(self)):
                w.writerow([
                    self.eval_index[k],
                    repr(self.candidate_loss[k]),
                    repr(self.best_loss[k]),
                    self.solution_size[k],
                    f"{self.millis[k]:.3f}" if timing else "",
                ])

    @classmethod
    def read_csv(cls, path, method: str = "") -> "SearchTrace":
        t = cls(method)
        with open(path, newline="") as f:
            for row in csv.DictReader(f):
                t.eval_index.append(int(row["eval_index"]))
                t.candidate_loss.append(float(row["candidate_loss"]))
                t.best_loss.append(float(row["best_loss"]))
                t.solution_size.append(int(row["solution_size"]))
                t.millis.append(float(row["millis"]) if row["millis"] else math.nan)
        return t


class TraceError(AssertionError):
    pass


def validate_trace(trace: SearchTrace, budget: int | None = None, exact: bool = False) -> None:
    """Raise ``TraceError`` unless indices run 1..n, best loss never
    increases, best never exceeds the candidates seen, and the budget holds."""
    n = len(trace)
    if trace.eval_index != list(range(1, n + 1)):
        raise TraceError("eval indices are not 1..n")
    for k in range(1, n):
        if trace.best_loss[k] > trace.best_loss[k - 1]:
            raise TraceError(f"best loss increases at eval {k + 1}")
    if budget is not None:
        if n > budget:
            raise TraceError(f"{n} evaluations exceed the budget of {budget}")
        if exact and n != budget:
            raise TraceError(f"{n} evaluations, expected exactly {budget}")


@dataclass
class SearchResult:
    method: str
    solution: tuple
    loss: float
    n_evals: int
    trace: SearchTrace

    def to_json(self, seed=None, budget=None) -> dict:
        return {
            "method": self.method,
            "seed": seed,
            "budget": budget,
            "n_evals": self.n_evals,
            "loss": self.loss,
            "proposal_ids": [int(i) for i in self.solution],
        }
