"""Records exchanged between the ordering, simulation and evaluation layers."""

from typing import Dict, FrozenSet, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np


class HsicResult(NamedTuple):
    """The outcome of one HSIC independence test."""

    statistic: float
    p_value: float
    bandwidth_u: float
    bandwidth_v: float
    degenerate: bool = False
    method: str = "gamma"

    def to_json(self) -> dict:
        """Convert the result to a JSON dictionary."""
        return self._asdict()

    @classmethod
    def from_json(cls, data: dict) -> "HsicResult":
        """Convert a JSON dictionary to an HsicResult."""
        return cls(
            statistic=data["statistic"],
            p_value=data["p_value"],
            bandwidth_u=data["bandwidth_u"],
            bandwidth_v=data["bandwidth_v"],
            degenerate=data.get("degenerate", False),
            method=data.get("method", "gamma"),
        )


class IndependenceReport(NamedTuple):
    """Per-candidate HSIC tests and their Fisher combination."""

    candidate: str
    per_test: Tuple[Tuple[str, HsicResult], ...]
    combined_statistic: float
    combined_p: float

    def to_json(self) -> dict:
        """Convert the report to a JSON dictionary."""
        return {
            "candidate": self.candidate,
            "per_test": [
                {"counterpart": other, **result.to_json()}
                for other, result in self.per_test
            ],
            "combined_statistic": self.combined_statistic,
            "combined_p": self.combined_p,
        }


class TraceEntry(NamedTuple):
    """Diagnostics for one iteration of an ordering phase."""

    phase: str
    iteration: int
    scores: Tuple[Tuple[str, float], ...]
    selected: Optional[str]
    combined_p: Optional[float]
    threshold: float
    decision: str

    def to_json(self) -> dict:
        """Convert the entry to a JSON dictionary."""
        return {
            "phase": self.phase,
            "iteration": self.iteration,
            "scores": {candidate: p for candidate, p in self.scores},
            "selected": self.selected,
            "combined_p": self.combined_p,
            "threshold": self.threshold,
            "decision": self.decision,
        }

    @classmethod
    def from_json(cls, data: dict) -> "TraceEntry":
        """Convert a JSON dictionary to a TraceEntry."""
        return cls(
            phase=data["phase"],
            iteration=data["iteration"],
            scores=tuple(sorted(data.get("scores", {}).items())),
            selected=data.get("selected"),
            combined_p=data.get("combined_p"),
            threshold=data["threshold"],
            decision=data["decision"],
        )


class OrderingResult(NamedTuple):
    """
    A partial causal order.

    Every element of ``k_head`` precedes the elements after it, the whole of
    ``middle`` and ``k_tail``; every element of ``middle`` precedes ``k_tail``.
    ``strengths`` maps (child, parent) to an estimated connection strength.
    """

    k_head: Tuple[str, ...]
    middle: FrozenSet[str]
    k_tail: Tuple[str, ...]
    strengths: Dict[Tuple[str, str], float]
    trace: Tuple[TraceEntry, ...] = ()

    @property
    def variables(self) -> FrozenSet[str]:
        """Get every variable covered by the order."""
        return frozenset(self.k_head) | self.middle | frozenset(self.k_tail)

    def position(self, variable_id: str) -> Tuple[int, int]:
        """
        Get a sortable rank for a variable.

        Middle variables share one rank, so pairs inside the middle compare equal.
        """
        if variable_id in self.k_head:
            return (0, self.k_head.index(variable_id))
        if variable_id in self.middle:
            return (1, 0)
        if variable_id in self.k_tail:
            return (2, self.k_tail.index(variable_id))
        raise KeyError(f"Unknown variable {variable_id!r}")

    def to_json(self) -> dict:
        """Convert the result to a JSON dictionary."""
        return {
            "k_head": list(self.k_head),
            "middle": sorted(self.middle),
            "k_tail": list(self.k_tail),
            "strengths": [
                {"child": child, "parent": parent, "value": value}
                for (child, parent), value in sorted(self.strengths.items())
            ],
            "trace": [entry.to_json() for entry in self.trace],
        }

    @classmethod
    def from_json(cls, data: dict) -> "OrderingResult":
        """Convert a JSON dictionary to an OrderingResult."""
        return cls(
            k_head=tuple(data.get("k_head", [])),
            middle=frozenset(data.get("middle", [])),
            k_tail=tuple(data.get("k_tail", [])),
            strengths={
                (item["child"], item["parent"]): item["value"]
                for item in data.get("strengths", [])
            },
            trace=tuple(TraceEntry.from_json(item) for item in data.get("trace", [])),
        )


class GroundTruth(NamedTuple):
    """The true structure behind a simulated dataset."""

    variable_ids: Tuple[str, ...]
    b_true: np.ndarray
    ancestor: FrozenSet[Tuple[str, str]]
    shares_confounder: FrozenSet[Tuple[str, str]]

    def is_ancestor(self, first: str, second: str) -> bool:
        """Check if there is a directed path from first to second."""
        return (first, second) in self.ancestor

    def confounded(self, first: str, second: str) -> bool:
        """Check if the two variables share a latent confounder."""
        return (first, second) in self.shares_confounder

    def strength(self, child: str, parent: str) -> float:
        """Get the true connection strength from parent to child."""
        index = self.variable_ids.index
        return float(self.b_true[index(child), index(parent)])

    def to_json(self) -> dict:
        """Convert the ground truth to a JSON dictionary."""
        return {
            "variable_ids": list(self.variable_ids),
            "B": self.b_true.tolist(),
            "ancestor": sorted([list(pair) for pair in self.ancestor]),
            "shares_confounder": sorted(
                [list(pair) for pair in self.shares_confounder if pair[0] < pair[1]]
            ),
        }

    @classmethod
    def from_json(cls, data: dict) -> "GroundTruth":
        """Convert a JSON dictionary to a GroundTruth."""
        shared = set()
        for first, second in data.get("shares_confounder", []):
            shared.add((first, second))
            shared.add((second, first))
        return cls(
            variable_ids=tuple(data["variable_ids"]),
            b_true=np.asarray(data["B"], dtype=float),
            ancestor=frozenset(tuple(pair) for pair in data.get("ancestor", [])),
            shares_confounder=frozenset(shared),
        )


class TrialRecord(NamedTuple):
    """Scores of one method on one simulated dataset."""

    method: str
    n: int
    trial: int
    seed: int
    precision: Optional[float] = None
    recall: Optional[float] = None
    rmse: Optional[float] = None
    error: Optional[str] = None

    def to_json(self) -> dict:
        """Convert the record to a JSON dictionary."""
        return self._asdict()


class MethodSummary(NamedTuple):
    """Trial-averaged scores of one method at one sample size."""

    method: str
    n: int
    precision: Optional[float]
    recall: Optional[float]
    rmse: Optional[float]
    trials: int
    failures: int

    def to_json(self) -> dict:
        """Convert the summary to a JSON dictionary."""
        return self._asdict()


class BenchmarkReport(NamedTuple):
    """Aggregated scores of every method over seeded trials."""

    alpha: float
    seed: int
    samples: Tuple[int, ...]
    trials: int
    summaries: Tuple[MethodSummary, ...]
    records: Tuple[TrialRecord, ...]

    @property
    def methods(self) -> List[str]:
        """Get the method names in report order."""
        names: List[str] = []
        for summary in self.summaries:
            if summary.method not in names:
                names.append(summary.method)
        return names

    @property
    def failures(self) -> int:
        """Get the number of failed trials across all methods."""
        return sum(1 for record in self.records if record.error is not None)

    def summary(self, method: str, n: int) -> MethodSummary:
        """Get the summary for a method and sample size."""
        for item in self.summaries:
            if item.method == method and item.n == n:
                return item
        raise KeyError(f"No summary for {method!r} at n={n}")

    def to_json(self, conventions: Optional[Sequence[str]] = None) -> dict:
        """Convert the report to a JSON dictionary."""
        return {
            "alpha": self.alpha,
            "seed": self.seed,
            "samples": list(self.samples),
            "trials": self.trials,
            "failures": self.failures,
            "conventions": list(conventions or ()),
            "summaries": [item.to_json() for item in self.summaries],
            "records": [item.to_json() for item in self.records],
        }
