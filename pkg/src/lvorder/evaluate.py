"""Pairwise order metrics and the multi-trial benchmark runner."""

import asyncio
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from . import (
    DEFAULT_ALPHA,
    METHOD_BASELINE,
    METHOD_DISCOVER,
    LvOrderError,
)
from .independence import HsicOptions
from .models import (
    BenchmarkReport,
    GroundTruth,
    MethodSummary,
    OrderingResult,
    TrialRecord,
)
from .ordering import direct_lingam_baseline, discover
from .regression import DataMatrix
from .simulate import ModelSpec, generate
from .utils import derive_seed

_LOG = logging.getLogger(__name__)

CONVENTIONS = (
    "An estimated pair counts as correct unless the true graph has a directed "
    "path in the opposite direction; pairs with no path either way are correct.",
    "Recall counts true ancestor pairs that share no latent confounder.",
    "Trials without estimated pairs are left out of the precision mean.",
)

Method = Callable[[DataMatrix, float, HsicOptions], OrderingResult]

METHODS: Dict[str, Method] = {
    METHOD_DISCOVER: lambda X, alpha, options: discover(X, alpha, options),
    METHOD_BASELINE: lambda X, alpha, options: direct_lingam_baseline(
        X, options, alpha=alpha
    ),
}


def estimated_ordered_pairs(result: OrderingResult) -> Set[Tuple[str, str]]:
    """Get every (i, j) the partial order places i strictly before j."""
    pairs: Set[Tuple[str, str]] = set()
    variables = sorted(result.variables)
    for first in variables:
        for second in variables:
            if first != second and result.position(first) < result.position(second):
                pairs.add((first, second))
    return pairs


def pairwise_precision(result: OrderingResult, truth: GroundTruth) -> Optional[float]:
    """
    Get the share of estimated pairs that do not contradict the true order.

    :returns None when the result estimates no pairs
    """
    pairs = estimated_ordered_pairs(result)
    if not pairs:
        return None
    correct = sum(1 for first, second in pairs if not truth.is_ancestor(second, first))
    return correct / len(pairs)


def pairwise_recall(result: OrderingResult, truth: GroundTruth) -> Optional[float]:
    """
    Get the share of unconfounded true ancestor pairs that were estimated.

    :returns None when the truth has no qualifying pairs
    """
    qualifying = [
        pair for pair in sorted(truth.ancestor) if not truth.confounded(*pair)
    ]
    if not qualifying:
        return None
    pairs = estimated_ordered_pairs(result)
    return sum(1 for pair in qualifying if pair in pairs) / len(qualifying)


def strength_rmse(result: OrderingResult, truth: GroundTruth) -> Optional[float]:
    """
    Get the root mean square error over the estimated connection strengths.

    :returns None when nothing was estimated
    """
    if not result.strengths:
        return None
    errors = [
        (value - truth.strength(child, parent)) ** 2
        for (child, parent), value in sorted(result.strengths.items())
    ]
    return math.sqrt(math.fsum(errors) / len(errors))


def run_trial(
    spec: ModelSpec,
    n: int,
    trial: int,
    alpha: float,
    seed: int,
    options: HsicOptions = HsicOptions(),
    methods: Sequence[str] = (METHOD_DISCOVER, METHOD_BASELINE),
) -> List[TrialRecord]:
    """
    Simulate one dataset and score every method on it.

    Each method gets its own seed so adding a method leaves the others unchanged.
    A method that fails is recorded with its error instead of raising.
    """
    data_seed = derive_seed(seed, n, trial, "data")
    X, truth = generate(spec, n, data_seed)
    records = []
    for method in methods:
        method_seed = derive_seed(seed, n, trial, method)
        method_options = options._replace(seed=method_seed)
        try:
            result = METHODS[method](X, alpha, method_options)
        except LvOrderError as ex:
            _LOG.warning("%s failed on n=%d trial %d: %s", method, n, trial, ex)
            records.append(
                TrialRecord(method, n, trial, data_seed, error=str(ex))
            )
            continue
        records.append(
            TrialRecord(
                method,
                n,
                trial,
                data_seed,
                precision=pairwise_precision(result, truth),
                recall=pairwise_recall(result, truth),
                rmse=strength_rmse(result, truth),
            )
        )
    return records


def _mean(values: List[Optional[float]]) -> Optional[float]:
    present = [value for value in values if value is not None]
    if not present:
        return None
    return math.fsum(present) / len(present)


def summarize(
    records: Sequence[TrialRecord], methods: Sequence[str], samples: Sequence[int]
) -> Tuple[MethodSummary, ...]:
    """Average per-trial metrics for every method and sample size."""
    summaries = []
    for method in methods:
        for n in samples:
            chosen = [r for r in records if r.method == method and r.n == n]
            succeeded = [r for r in chosen if r.error is None]
            summaries.append(
                MethodSummary(
                    method=method,
                    n=n,
                    precision=_mean([r.precision for r in succeeded]),
                    recall=_mean([r.recall for r in succeeded]),
                    rmse=_mean([r.rmse for r in succeeded]),
                    trials=len(chosen),
                    failures=len(chosen) - len(succeeded),
                )
            )
    return tuple(summaries)


async def async_run_benchmark(
    spec: ModelSpec,
    n_list: Sequence[int],
    trials: int,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
    options: HsicOptions = HsicOptions(),
    threads: int = 1,
    methods: Sequence[str] = (METHOD_DISCOVER, METHOD_BASELINE),
) -> BenchmarkReport:
    """
    Run every method on seeded simulated datasets.

    Trials run on a thread pool and are gathered in submission order, so the
    report does not depend on the number of threads.
    """
    if trials < 1:
        raise ValueError(f"trials must be positive, got {trials}")
    options.validate()
    loop = asyncio.get_running_loop()
    records: List[TrialRecord] = []
    with ThreadPoolExecutor(max_workers=threads) as executor:
        for n in n_list:
            _LOG.info("benchmark: n=%d, %d trials", n, trials)
            jobs = [
                loop.run_in_executor(
                    executor, run_trial, spec, n, trial, alpha, seed, options, methods
                )
                for trial in range(trials)
            ]
            for trial_records in await asyncio.gather(*jobs):
                records.extend(trial_records)

    return BenchmarkReport(
        alpha=alpha,
        seed=seed,
        samples=tuple(n_list),
        trials=trials,
        summaries=summarize(records, methods, n_list),
        records=tuple(records),
    )


def run_benchmark(
    spec: ModelSpec,
    n_list: Sequence[int],
    trials: int,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
    options: HsicOptions = HsicOptions(),
    threads: int = 1,
) -> BenchmarkReport:
    """Run the benchmark outside of an event loop."""
    return asyncio.run(
        async_run_benchmark(spec, n_list, trials, alpha, seed, options, threads)
    )


def _cell(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.3f}"


def render_table(report: BenchmarkReport) -> str:
    """Render precision, recall and RMSE as methods x sample sizes tables."""
    methods = report.methods
    width = max([len("Method")] + [len(m) for m in methods]) + 2
    header = "Method".ljust(width) + "".join(f"{n:>10}" for n in report.samples)
    blocks = []
    for title, field in (
        ("Precision", "precision"),
        ("Recall", "recall"),
        ("RMSE", "rmse"),
    ):
        lines = [title, header, "-" * len(header)]
        for method in methods:
            cells = "".join(
                f"{_cell(getattr(report.summary(method, n), field)):>10}"
                for n in report.samples
            )
            lines.append(method.ljust(width) + cells)
        blocks.append("\n".join(lines))

    footer = [f"trials={report.trials} alpha={report.alpha} seed={report.seed}"]
    if report.failures:
        footer.append(f"failed trials: {report.failures}")
    footer.extend(f"* {note}" for note in CONVENTIONS)
    return "\n\n".join(blocks) + "\n\n" + "\n".join(footer) + "\n"
