"""Tests for the top-down and bottom-up ordering search."""
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from lvorder import (
    DECISION_APPENDED,
    PHASE_BOTTOM_UP,
    PHASE_TOP_DOWN,
    STOP_EXHAUSTED,
    STOP_SKIPPED,
    STOP_THRESHOLD,
    DegenerateDataError,
    PhaseError,
)
from lvorder.evaluate import pairwise_precision
from lvorder.models import OrderingResult
from lvorder.ordering import (
    bottom_up_phase,
    direct_lingam_baseline,
    discover,
    estimate_strengths,
    score_exogenous_candidate,
    score_sink_candidate,
    top_down_phase,
)
from lvorder.regression import DataMatrix
from lvorder.simulate import (
    DOUBLE_EXPONENTIAL,
    GAUSS_MIXTURE_ASYMMETRIC,
    GAUSS_MIXTURE_SYMMETRIC,
    ModelSpec,
    NoiseSpec,
    all_confounded_spec,
    calibrate_snr,
    chain_spec,
    generate,
    ground_truth,
)
from spec_files import spec_from_json_file


def _sample(spec: ModelSpec, n: int, seed: int) -> DataMatrix:
    X, _ = generate(spec, n, seed)
    return X.centered()


def _assert_partition(result: OrderingResult, variable_ids):
    head, tail = set(result.k_head), set(result.k_tail)
    assert not head & tail
    assert not head & result.middle
    assert not tail & result.middle
    assert result.variables == frozenset(variable_ids)


def _confounded_only_spec() -> ModelSpec:
    noise = NoiseSpec.of(DOUBLE_EXPONENTIAL, 0.5)
    return ModelSpec.create(
        np.zeros((2, 2)),
        [[1.0], [1.0]],
        [noise, noise],
        [NoiseSpec.of(GAUSS_MIXTURE_ASYMMETRIC)],
    )


def test_exogenous_direction():
    """Test the cause is more independent of its residual than the effect."""
    wins = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        cause = rng.laplace(size=500)
        X = DataMatrix([cause, cause + rng.uniform(-1.5, 1.5, size=500)], ["j", "i"])
        X = X.centered()
        cause_report = score_exogenous_candidate(X, "j", ["i", "j"])
        effect_report = score_exogenous_candidate(X, "i", ["i", "j"])
        assert [other for other, _ in cause_report.per_test] == ["i"]
        if cause_report.combined_p > effect_report.combined_p:
            wins += 1
    assert wins >= 17


def test_exogenous_constant():
    """Test a constant candidate is reported."""
    rng = np.random.default_rng(0)
    X = DataMatrix([np.zeros(30), rng.normal(size=30)])
    with pytest.raises(DegenerateDataError):
        score_exogenous_candidate(X, "x1", ["x1", "x2"])


def test_exogenous_preconditions():
    """Test the candidate must be active."""
    X = _sample(chain_spec(3), 30, 0)
    with pytest.raises(ValueError):
        score_exogenous_candidate(X, "x1", ["x2", "x3"])
    with pytest.raises(ValueError):
        score_exogenous_candidate(X, "x1", ["x1"])


def test_sink_exact_combination():
    """Test a variable explained exactly by the others is degenerate."""
    rng = np.random.default_rng(1)
    x = rng.laplace(size=(2, 100))
    X = DataMatrix(np.vstack([x, x[0] - 0.5 * x[1]])).centered()
    report = score_sink_candidate(X, "x3", ["x3"], ["x1", "x2", "x3"])
    assert all(result.degenerate for _, result in report.per_test)
    assert report.combined_p == 1.0


def test_sink_preconditions():
    """Test at least three variables must be present."""
    X = _sample(chain_spec(3), 30, 0)
    with pytest.raises(ValueError):
        score_sink_candidate(X, "x3", ["x3"], ["x2", "x3"])
    with pytest.raises(ValueError):
        score_sink_candidate(X, "x1", ["x3"], ["x1", "x2", "x3"])


@pytest.mark.timeout(300)
def test_sink_beside_confounded_parent():
    """Test an unconfounded sink scores best even when its parent is confounded."""
    spec = spec_from_json_file("confounded_pair.json")
    present = ["x1", "x2", "x3"]
    wins = 0
    for seed in range(10):
        X = _sample(spec, 1000, seed)
        reports = [score_sink_candidate(X, j, present, present) for j in present]
        best = max(reports, key=lambda report: report.combined_p)
        if best.candidate == "x3":
            wins += 1
    assert wins >= 6


@pytest.mark.timeout(300)
def test_top_down_two_variables():
    """Test a single edge is ordered completely."""
    correct = 0
    for seed in range(10):
        phase = top_down_phase(_sample(chain_spec(2), 1000, seed))
        if phase.order == ("x1", "x2"):
            correct += 1
            assert phase.trace[-1].decision == STOP_EXHAUSTED
    assert correct >= 7


@pytest.mark.timeout(300)
def test_top_down_chain():
    """Test a confounder-free chain is ordered from the top."""
    correct = 0
    for seed in range(10):
        phase = top_down_phase(_sample(chain_spec(4), 1000, seed))
        assert phase.trace[0].phase == PHASE_TOP_DOWN
        assert phase.trace[-1].decision in (STOP_EXHAUSTED, STOP_THRESHOLD)
        if phase.order == ("x1", "x2", "x3", "x4"):
            correct += 1
    assert correct >= 7


@pytest.mark.timeout(300)
def test_top_down_confounded_pair():
    """Test the search stops when a confounder leaves no exogenous variable."""
    stopped = 0
    for seed in range(10):
        phase = top_down_phase(_sample(_confounded_only_spec(), 1000, seed))
        if phase.order == ():
            stopped += 1
            assert phase.trace[-1].decision == STOP_THRESHOLD
            assert phase.trace[-1].combined_p < phase.trace[-1].threshold
    assert stopped >= 6


def test_top_down_trace():
    """Test each appended variable leaves one trace entry."""
    phase = top_down_phase(_sample(chain_spec(3), 200, 3), stop_early=False)
    assert len(phase.order) == 3
    assert [entry.iteration for entry in phase.trace] == [0, 1, 2]
    assert [entry.decision for entry in phase.trace] == [
        DECISION_APPENDED,
        DECISION_APPENDED,
        STOP_EXHAUSTED,
    ]
    assert len(phase.trace[0].scores) == 3
    assert phase.trace[0].threshold == pytest.approx(0.025)
    assert phase.residuals.variable_ids == (phase.order[-1],)


def test_bottom_up_skipped():
    """Test nothing is tested when at most two variables are left."""
    X = _sample(chain_spec(4), 50, 0)
    phase = bottom_up_phase(X, ("x1", "x2"))
    assert phase.order == ()
    assert len(phase.trace) == 1
    assert phase.trace[0].phase == PHASE_BOTTOM_UP
    assert phase.trace[0].decision == STOP_SKIPPED
    assert phase.trace[0].scores == ()


@pytest.mark.timeout(300)
def test_bottom_up_chain():
    """Test a confounder-free chain is ordered from the bottom."""
    correct = 0
    for seed in range(8):
        phase = bottom_up_phase(_sample(chain_spec(4), 1000, seed), ())
        assert len(phase.order) <= 2
        if phase.order == ("x3", "x4"):
            correct += 1
    assert correct >= 6


def test_bottom_up_keeps_head_as_regressors():
    """Test head variables are regressors but never sink candidates."""
    phase = bottom_up_phase(_sample(chain_spec(4), 300, 1), ("x1",))
    assert "x1" not in phase.order
    first = phase.trace[0]
    assert [candidate for candidate, _ in first.scores] == ["x2", "x3", "x4"]


def test_strengths_two_variables():
    """Test the strength of a single edge."""
    spec = ModelSpec.create(
        [[0.0, 0.0], [0.8, 0.0]],
        None,
        [NoiseSpec.of(GAUSS_MIXTURE_ASYMMETRIC)] * 2,
    )
    X = _sample(spec, 5000, 4)
    order = OrderingResult(("x1", "x2"), frozenset(), (), {})
    strengths = estimate_strengths(X, order)
    assert list(strengths) == [("x2", "x1")]
    assert strengths[("x2", "x1")] == pytest.approx(0.8, abs=0.05)


def test_strengths_regressors():
    """Test tail variables are regressed on the head, the middle and the tail prefix."""
    X = _sample(chain_spec(5), 200, 2)
    order = OrderingResult(("x1",), frozenset({"x2", "x3"}), ("x4", "x5"), {})
    strengths = estimate_strengths(X, order)
    assert sorted(strengths) == [
        ("x4", "x1"),
        ("x4", "x2"),
        ("x4", "x3"),
        ("x5", "x1"),
        ("x5", "x2"),
        ("x5", "x3"),
        ("x5", "x4"),
    ]


@pytest.mark.timeout(300)
def test_discover_chain():
    """Test a confounder-free chain is recovered without a middle."""
    recovered = 0
    for seed in range(6):
        X = _sample(chain_spec(3), 1000, seed)
        result = discover(X)
        _assert_partition(result, X.variable_ids)
        if result.k_head == ("x1", "x2", "x3") and not result.middle:
            recovered += 1
            assert ("x1", "x1") not in result.strengths
            assert set(result.strengths) == {("x2", "x1"), ("x3", "x1"), ("x3", "x2")}
    assert recovered >= 4


@pytest.mark.timeout(900)
def test_discover_all_confounded():
    """Test nothing is ordered when every variable shares one confounder."""
    empty = 0
    for seed in range(10):
        X = _sample(all_confounded_spec(), 2000, seed)
        result = discover(X)
        _assert_partition(result, X.variable_ids)
        if not result.k_head and not result.k_tail:
            empty += 1
            assert result.middle == frozenset(X.variable_ids)
            assert result.strengths == {}
    assert empty >= 7


def _confounded_edge_spec() -> ModelSpec:
    # x2 and x3 are uncorrelated although x2 -> x3; x4 is an unconfounded sink
    B = np.zeros((4, 4))
    B[2, 1] = 0.8
    B[3, 2] = 0.7
    Lambda = np.array([[0.0], [1.0], [-1.6], [0.0]])
    noise = [
        NoiseSpec.of(GAUSS_MIXTURE_ASYMMETRIC),
        NoiseSpec.of(DOUBLE_EXPONENTIAL),
        NoiseSpec.of(GAUSS_MIXTURE_SYMMETRIC),
        NoiseSpec.of(GAUSS_MIXTURE_ASYMMETRIC),
    ]
    spec = ModelSpec.create(B, Lambda, noise, [NoiseSpec.of(DOUBLE_EXPONENTIAL)])
    return calibrate_snr(spec)


@pytest.mark.timeout(600)
def test_baseline_misorders_confounded_edge():
    """Test the baseline puts a confounded child first where discover abstains."""
    spec = _confounded_edge_spec()
    truth = ground_truth(spec)
    discovered, baseline = [], []
    for seed in range(6):
        X = _sample(spec, 1000, seed)
        result = discover(X)
        _assert_partition(result, X.variable_ids)
        assert not ({"x2", "x3"} <= set(result.k_head))
        precision = pairwise_precision(result, truth)
        if precision is not None:
            discovered.append(precision)
        baseline.append(pairwise_precision(direct_lingam_baseline(X), truth))
    assert discovered
    assert np.mean(discovered) > np.mean(baseline)
    assert np.mean(baseline) < 1.0


def test_discover_relabeling():
    """Test renaming and reordering variables maps the result accordingly."""
    X = _sample(chain_spec(3), 500, 10)
    names = {"x1": "c", "x2": "a", "x3": "b"}
    rows = [2, 0, 1]
    relabeled = DataMatrix(
        X.values[rows], [names[X.variable_ids[row]] for row in rows]
    )
    first = discover(X)
    second = discover(relabeled)
    assert second.k_head == tuple(names[i] for i in first.k_head)
    assert second.middle == frozenset(names[i] for i in first.middle)
    assert second.k_tail == tuple(names[i] for i in first.k_tail)
    for (child, parent), value in first.strengths.items():
        assert second.strengths[(names[child], names[parent])] == pytest.approx(
            value, rel=1e-9, abs=1e-12
        )


def test_discover_independent_pair():
    """Test two independent variables."""
    rng = np.random.default_rng(5)
    X = DataMatrix(rng.laplace(size=(2, 300)))
    result = discover(X)
    _assert_partition(result, X.variable_ids)
    assert len(result.k_head) <= 2
    assert result.k_tail == ()


def test_discover_deterministic():
    """Test repeated runs and threaded scoring agree exactly."""
    X = _sample(chain_spec(4), 300, 6)
    first = discover(X)
    assert discover(X) == first
    with ThreadPoolExecutor(max_workers=3) as executor:
        assert discover(X, executor=executor).to_json() == first.to_json()


def test_discover_sample_permutation():
    """Test shuffling samples leaves the order unchanged."""
    X = _sample(chain_spec(3), 300, 7)
    order = np.random.default_rng(0).permutation(X.n)
    first = discover(X)
    second = discover(X.permute_samples(order))
    assert (second.k_head, second.middle, second.k_tail) == (
        first.k_head,
        first.middle,
        first.k_tail,
    )


def test_discover_scale():
    """Test rescaling a variable leaves the order unchanged."""
    X = _sample(chain_spec(3), 300, 8)
    scaled = DataMatrix(X.values * np.array([[5.0], [1.0], [0.2]]), X.variable_ids)
    first = discover(X)
    second = discover(scaled)
    assert (second.k_head, second.middle, second.k_tail) == (
        first.k_head,
        first.middle,
        first.k_tail,
    )


def test_discover_degenerate():
    """Test a constant variable names the failing phase and variable."""
    rng = np.random.default_rng(9)
    X = DataMatrix(np.vstack([rng.laplace(size=(2, 50)), np.full(50, 3.0)]))
    with pytest.raises(PhaseError) as info:
        discover(X)
    assert info.value.phase == PHASE_TOP_DOWN
    assert info.value.variable_id == "x3"


@pytest.mark.parametrize("shape", [(1, 50), (3, 19)])
def test_discover_preconditions(shape):
    """Test too few variables or samples."""
    X = DataMatrix(np.random.default_rng(0).normal(size=shape))
    with pytest.raises(ValueError):
        discover(X)


def test_baseline_orders_everything():
    """Test the baseline always orders every variable."""
    for seed in range(3):
        X = _sample(_confounded_only_spec(), 200, seed)
        result = direct_lingam_baseline(X)
        assert sorted(result.k_head) == ["x1", "x2"]
        assert result.middle == frozenset()
        assert result.k_tail == ()
        assert len(result.strengths) == 1


@pytest.mark.timeout(300)
def test_baseline_matches_discover_on_chain():
    """Test the baseline agrees with the hybrid search without confounders."""
    agree = 0
    for seed in range(6):
        X = _sample(chain_spec(3), 1000, seed)
        if direct_lingam_baseline(X).k_head == discover(X).k_head:
            agree += 1
    assert agree >= 4
