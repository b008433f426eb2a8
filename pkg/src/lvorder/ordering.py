"""Top-down and bottom-up estimation of a partial causal order."""

import logging
from concurrent.futures import Executor
from typing import (
    Callable,
    Dict,
    Iterable,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from . import (
    CONDITION_CAP,
    DECISION_APPENDED,
    DEFAULT_ALPHA,
    MIN_HSIC_SAMPLES,
    PHASE_BOTTOM_UP,
    PHASE_STRENGTHS,
    PHASE_TOP_DOWN,
    STOP_EXHAUSTED,
    STOP_SKIPPED,
    STOP_THRESHOLD,
    STOP_TOO_FEW,
    LvOrderError,
    PhaseError,
)
from .independence import (
    HsicOptions,
    bonferroni_threshold,
    fisher_combine,
    hsic_test,
)
from .models import IndependenceReport, OrderingResult, TraceEntry
from .regression import DataMatrix, multiple_residual, ols_fit, simple_residuals

_LOG = logging.getLogger(__name__)

# residuals this small relative to the regressand are exact linear fits
_RESIDUAL_RTOL = 1e-9


class PhaseResult(NamedTuple):
    """The output of one ordering phase."""

    order: Tuple[str, ...]
    residuals: Optional[DataMatrix]
    trace: Tuple[TraceEntry, ...]


def _snap(residual: np.ndarray, reference: np.ndarray) -> np.ndarray:
    scale = np.linalg.norm(reference - reference.mean())
    if np.linalg.norm(residual - residual.mean()) <= _RESIDUAL_RTOL * scale:
        return np.zeros_like(residual)
    return residual


def _report(
    candidate: str,
    pairs: Iterable[Tuple[str, np.ndarray, np.ndarray]],
    options: HsicOptions,
) -> IndependenceReport:
    per_test = tuple((other, hsic_test(u, v, options)) for other, u, v in pairs)
    statistic, combined = fisher_combine([result.p_value for _, result in per_test])
    return IndependenceReport(candidate, per_test, statistic, combined)


def score_exogenous_candidate(
    X: DataMatrix,
    j: str,
    active: Iterable[str],
    options: HsicOptions = HsicOptions(),
) -> IndependenceReport:
    """
    Score how independent x_j is of the residuals of the others regressed on it.

    :raises DegenerateDataError: if x_j has zero variance
    """
    active = list(active)
    if j not in active:
        raise ValueError(f"{j!r} is not an active variable")
    if len(active) < 2:
        raise ValueError("at least 2 active variables are required")
    work = X.subset(active)
    residuals = simple_residuals(work, j)
    regressor = work.row(j)
    pairs = (
        (i, regressor, _snap(residuals.row(i), work.row(i)))
        for i in residuals.variable_ids
    )
    return _report(j, pairs, options)


def score_sink_candidate(
    X_work: DataMatrix,
    j: str,
    candidates: Iterable[str],
    present: Iterable[str],
    options: HsicOptions = HsicOptions(),
    condition_cap: float = CONDITION_CAP,
) -> IndependenceReport:
    """
    Score how independent x_j's regressors are of its multiple-regression residual.

    x_j is regressed on every other present variable, including ones already
    placed at the head of the order.
    """
    present = list(present)
    if j not in candidates or j not in present:
        raise ValueError(f"{j!r} is not a present candidate")
    if len(present) < 3:
        raise ValueError("at least 3 present variables are required")
    work = X_work.subset(present)
    residual = _snap(multiple_residual(work, j, condition_cap), work.row(j))
    pairs = ((i, work.row(i), residual) for i in present if i != j)
    return _report(j, pairs, options)


def _score_all(
    score: Callable[[str], IndependenceReport],
    candidates: Sequence[str],
    executor: Optional[Executor],
) -> List[IndependenceReport]:
    if executor is None:
        return [score(j) for j in candidates]
    return list(executor.map(score, candidates))


def _best(reports: Sequence[IndependenceReport]) -> IndependenceReport:
    # ties go to the smallest variable id
    return min(reports, key=lambda report: (-report.combined_p, report.candidate))


def top_down_phase(
    X: DataMatrix,
    alpha: float = DEFAULT_ALPHA,
    options: HsicOptions = HsicOptions(),
    stop_early: bool = True,
    p_total: Optional[int] = None,
    executor: Optional[Executor] = None,
) -> PhaseResult:
    """
    Find exogenous variables one by one from the top of the order.

    Each iteration appends the candidate most independent of its residuals and
    replaces the working data with those residuals. The phase stops when the
    best combined p-value falls below ``alpha / (p - 1)``, with p the original
    variable count, or when one variable remains, which is then appended.

    :param stop_early: set to False to never stop on the threshold
    """
    p_total = p_total or X.p
    threshold = bonferroni_threshold(alpha, p_total)
    work = X
    head: List[str] = []
    trace: List[TraceEntry] = []

    while True:
        active = sorted(work.variable_ids)
        iteration = len(head)
        if len(active) == 1:
            head.append(active[0])
            trace.append(
                TraceEntry(
                    PHASE_TOP_DOWN,
                    iteration,
                    (),
                    active[0],
                    None,
                    threshold,
                    STOP_EXHAUSTED,
                )
            )
            _LOG.info("top-down: exhausted, order %s", head)
            break

        current = work
        reports = _score_all(
            lambda j: score_exogenous_candidate(current, j, active, options),
            active,
            executor,
        )
        best = _best(reports)
        scores = tuple((r.candidate, r.combined_p) for r in reports)
        _LOG.debug("top-down iteration %d scores: %s", iteration, scores)

        if stop_early and best.combined_p < threshold:
            trace.append(
                TraceEntry(
                    PHASE_TOP_DOWN,
                    iteration,
                    scores,
                    best.candidate,
                    best.combined_p,
                    threshold,
                    STOP_THRESHOLD,
                )
            )
            _LOG.info(
                "top-down: stopped at %d variables, best p=%.3g < %.3g",
                len(head),
                best.combined_p,
                threshold,
            )
            break

        head.append(best.candidate)
        trace.append(
            TraceEntry(
                PHASE_TOP_DOWN,
                iteration,
                scores,
                best.candidate,
                best.combined_p,
                threshold,
                DECISION_APPENDED,
            )
        )
        work = simple_residuals(work, best.candidate)

    return PhaseResult(tuple(head), work, tuple(trace))


def bottom_up_phase(
    X: DataMatrix,
    k_head: Sequence[str],
    alpha: float = DEFAULT_ALPHA,
    options: HsicOptions = HsicOptions(),
    condition_cap: float = CONDITION_CAP,
    executor: Optional[Executor] = None,
) -> PhaseResult:
    """
    Find sink variables one by one from the bottom of the order.

    Runs only when fewer than p - 2 variables were ordered from the top. Head
    variables stay in the regressions but are never sink candidates. The phase
    stops when the best combined p-value falls below ``alpha / (p - 1)`` or when
    fewer than 3 candidates would remain.
    """
    threshold = bonferroni_threshold(alpha, X.p)
    if len(k_head) >= X.p - 2:
        entry = TraceEntry(
            PHASE_BOTTOM_UP, 0, (), None, None, threshold, STOP_SKIPPED
        )
        return PhaseResult((), None, (entry,))

    head = set(k_head)
    present = list(X.variable_ids)
    tail: List[str] = []
    trace: List[TraceEntry] = []

    while True:
        candidates = sorted(i for i in present if i not in head)
        iteration = len(tail)
        members = list(present)
        reports = _score_all(
            lambda j: score_sink_candidate(
                X, j, candidates, members, options, condition_cap
            ),
            candidates,
            executor,
        )
        best = _best(reports)
        scores = tuple((r.candidate, r.combined_p) for r in reports)
        _LOG.debug("bottom-up iteration %d scores: %s", iteration, scores)

        if best.combined_p < threshold:
            trace.append(
                TraceEntry(
                    PHASE_BOTTOM_UP,
                    iteration,
                    scores,
                    best.candidate,
                    best.combined_p,
                    threshold,
                    STOP_THRESHOLD,
                )
            )
            _LOG.info(
                "bottom-up: stopped at %d variables, best p=%.3g < %.3g",
                len(tail),
                best.combined_p,
                threshold,
            )
            break

        tail.insert(0, best.candidate)
        present.remove(best.candidate)
        remaining = len(candidates) - 1
        decision = STOP_TOO_FEW if remaining < 3 else DECISION_APPENDED
        trace.append(
            TraceEntry(
                PHASE_BOTTOM_UP,
                iteration,
                scores,
                best.candidate,
                best.combined_p,
                threshold,
                decision,
            )
        )
        if remaining < 3:
            _LOG.info("bottom-up: %d candidates left, stopping", remaining)
            break

    return PhaseResult(tuple(tail), X.subset(present), tuple(trace))


def estimate_strengths(
    X: DataMatrix,
    partial_order: OrderingResult,
    condition_cap: float = CONDITION_CAP,
) -> Dict[Tuple[str, str], float]:
    """
    Regress each ordered variable on the variables the partial order puts before it.

    Head variables use the head prefix; tail variables use the whole head, the
    whole middle and the tail prefix. Fits run on the original centered data.
    """
    strengths: Dict[Tuple[str, str], float] = {}
    jobs: List[Tuple[str, List[str]]] = []
    head = list(partial_order.k_head)
    for position, child in enumerate(head):
        jobs.append((child, head[:position]))
    before_tail = head + sorted(partial_order.middle)
    for position, child in enumerate(partial_order.k_tail):
        jobs.append((child, before_tail + list(partial_order.k_tail[:position])))

    for child, parents in jobs:
        if not parents:
            continue
        for parent, value in ols_fit(X, child, parents, condition_cap).items():
            strengths[(child, parent)] = value
    return strengths


def _validate(X: DataMatrix):
    if X.p < 2:
        raise ValueError(f"at least 2 variables are required, got {X.p}")
    if X.n < MIN_HSIC_SAMPLES:
        raise ValueError(f"at least {MIN_HSIC_SAMPLES} samples are required, got {X.n}")


def _with_strengths(
    X: DataMatrix, result: OrderingResult, condition_cap: float
) -> OrderingResult:
    try:
        strengths = estimate_strengths(X, result, condition_cap)
    except LvOrderError as ex:
        raise PhaseError(PHASE_STRENGTHS, ex) from ex
    return result._replace(strengths=strengths)


def discover(
    X: DataMatrix,
    alpha: float = DEFAULT_ALPHA,
    options: HsicOptions = HsicOptions(),
    condition_cap: float = CONDITION_CAP,
    executor: Optional[Executor] = None,
) -> OrderingResult:
    """
    Estimate a partial causal order robust against latent confounders.

    Runs the top-down phase, then the bottom-up phase on what is left, then
    estimates connection strengths. Variables in neither list form the middle.
    """
    _validate(X)
    data = X.centered()

    try:
        top = top_down_phase(data, alpha, options, executor=executor)
    except LvOrderError as ex:
        raise PhaseError(PHASE_TOP_DOWN, ex) from ex

    try:
        bottom = bottom_up_phase(
            data, top.order, alpha, options, condition_cap, executor
        )
    except LvOrderError as ex:
        raise PhaseError(PHASE_BOTTOM_UP, ex) from ex

    middle = frozenset(data.variable_ids) - set(top.order) - set(bottom.order)
    result = OrderingResult(
        k_head=top.order,
        middle=middle,
        k_tail=bottom.order,
        strengths={},
        trace=top.trace + bottom.trace,
    )
    return _with_strengths(data, result, condition_cap)


def direct_lingam_baseline(
    X: DataMatrix,
    options: HsicOptions = HsicOptions(),
    condition_cap: float = CONDITION_CAP,
    executor: Optional[Executor] = None,
    alpha: float = DEFAULT_ALPHA,
) -> OrderingResult:
    """
    Order every variable with the top-down search and no stopping rule.

    This assumes no latent confounders. ``alpha`` only labels the trace.
    """
    _validate(X)
    data = X.centered()
    try:
        top = top_down_phase(data, alpha, options, stop_early=False, executor=executor)
    except LvOrderError as ex:
        raise PhaseError(PHASE_TOP_DOWN, ex) from ex

    result = OrderingResult(
        k_head=top.order,
        middle=frozenset(),
        k_tail=(),
        strengths={},
        trace=top.trace,
    )
    return _with_strengths(data, result, condition_cap)
