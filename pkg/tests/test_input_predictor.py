from __future__ import annotations

import random
from fractions import Fraction

import pytest

from benchmark_corpus import NONLINEAR_ROOT
from conftest import find_loc
from contract_parser import SourceLoc, parse_contract
from contract_vm import StorageState, Transaction, execute_tx
from cost_metrics import CostVector, MetricId, MetricKind
from fuzz_case import ScalarRef, TestCase
from input_predictor import (
    DataPoint,
    InputPredictor,
    Prediction,
    PredictionError,
    PredictionGoal,
    round_half_away,
    secant_root,
)
from value_domain import INT_MAX


def _baz_case(a: int, b: int, c: int) -> TestCase:
    return TestCase.single(Transaction("baz", (a, b, c)))


def _costs(contract, test: TestCase) -> CostVector:
    return execute_tx(contract, StorageState(), test.focus).cost_vector


def test_secant_worked_example() -> None:
    assert secant_root(DataPoint(-1, 43), DataPoint(7, 35)) == 42


def test_secant_predicts_b_from_two_runs() -> None:
    assert secant_root(DataPoint(0, 3), DataPoint(-3, 6)) == 3


def test_secant_declines_flat_lines_and_known_points() -> None:
    assert secant_root(DataPoint(5, 4), DataPoint(9, 4)) is None
    # The root is one of the two inputs.
    assert secant_root(DataPoint(1, 1), DataPoint(2, 0)) is None


def test_secant_needs_distinct_inputs() -> None:
    with pytest.raises(ValueError):
        secant_root(DataPoint(3, 1), DataPoint(3, 2))


def test_secant_clamps_to_the_word_range() -> None:
    assert secant_root(DataPoint(INT_MAX - 10, 20), DataPoint(INT_MAX - 9, 19)) == INT_MAX


def test_round_half_away_from_zero() -> None:
    assert round_half_away(Fraction(5, 2)) == 3
    assert round_half_away(Fraction(-5, 2)) == -3
    assert round_half_away(Fraction(7, 3)) == 2
    assert round_half_away(Fraction(-7, 3)) == -2
    assert round_half_away(Fraction(0)) == 0


def test_secant_is_exact_on_affine_costs() -> None:
    rng = random.Random(11)
    for _ in range(10_000):
        root = rng.randint(-(10**12), 10**12)
        slope = rng.randint(1, 10**6)
        side = rng.choice((-1, 1))
        i0 = root + side * rng.randint(1, 10**6)
        i1 = root + side * rng.randint(1, 10**6)
        if i0 == i1:
            continue
        p0 = DataPoint(i0, slope * abs(i0 - root))
        p1 = DataPoint(i1, slope * abs(i1 - root))
        assert secant_root(p0, p1) == root


def test_predicts_a_equals_42_from_two_baz_runs(baz) -> None:
    before, after = _baz_case(-1, 3, -5), _baz_case(7, 3, -5)
    predictor = InputPredictor(random.Random(0))
    prediction = predictor.predict(before, _costs(baz, before), after, _costs(baz, after))
    assert prediction == Prediction(ScalarRef.arg(0, 0), 42, MetricId(find_loc(baz, "a == 42"), MetricKind.FLIP_TO_TRUE))


def test_no_prediction_when_metrics_are_zero_or_unchanged(baz) -> None:
    before, after = _baz_case(-1, 3, -5), _baz_case(42, 3, -5)
    predictor = InputPredictor(random.Random(0))
    assert predictor.eligible_metrics(_costs(baz, before), _costs(baz, after)) == []
    assert predictor.predict(before, _costs(baz, before), after, _costs(baz, after)) is None


def test_identical_cost_vectors_give_no_prediction(baz) -> None:
    before, after = _baz_case(-1, 3, -5), _baz_case(-1, 3, -5).with_value(ScalarRef.arg(0, 2), -6)
    predictor = InputPredictor(random.Random(0))
    costs = _costs(baz, before)
    assert predictor.predict(before, costs, after, costs) is None


def test_metrics_on_opposite_sides_stay_eligible_by_default() -> None:
    metric = MetricId(SourceLoc(1, 1), MetricKind.FLIP_TO_TRUE)
    below = CostVector().record(metric, 5, -1)
    above = CostVector().record(metric, 3, 1)
    same_side = CostVector().record(metric, 3, -1)
    assert InputPredictor.eligible_metrics(below, above) == [metric]
    assert InputPredictor.eligible_metrics(below, above, same_side_only=True) == []
    assert InputPredictor.eligible_metrics(below, same_side, same_side_only=True) == [metric]


def test_equality_costs_across_the_root_still_predict() -> None:
    source = "contract E {\n  fn check(a) {\n    if (a == 42) {\n      return 1;\n    }\n    return 0;\n  }\n}\n"
    contract = parse_contract(source)
    before, after = TestCase.single(Transaction("check", (0,))), TestCase.single(Transaction("check", (100,)))
    costs_before, costs_after = _costs(contract, before), _costs(contract, after)
    metric = MetricId(find_loc(contract, "a == 42"), MetricKind.FLIP_TO_TRUE)
    assert (costs_before.get(metric), costs_after.get(metric)) == (42, 58)
    assert InputPredictor(random.Random(0)).predict(before, costs_before, after, costs_after) == Prediction(ScalarRef.arg(0, 0), -263, metric)
    assert InputPredictor(random.Random(0), same_side_only=True).predict(before, costs_before, after, costs_after) is None


def test_excluded_metric_is_never_chosen(baz) -> None:
    before, after = _baz_case(-1, 0, -5), _baz_case(-1, -3, -5)
    costs_before, costs_after = _costs(baz, before), _costs(baz, after)
    eligible = InputPredictor.eligible_metrics(costs_before, costs_after)
    assert len(eligible) == 2
    for seed in range(10):
        prediction = InputPredictor(random.Random(seed)).predict(before, costs_before, after, costs_after, exclude=eligible[0])
        assert prediction is not None and prediction.metric == eligible[1]


def test_more_than_one_changed_scalar_is_a_programming_error(baz) -> None:
    before, after = _baz_case(0, 0, 0), _baz_case(1, 1, 0)
    predictor = InputPredictor(random.Random(0))
    with pytest.raises(PredictionError):
        predictor.predict(before, _costs(baz, before), after, _costs(baz, after))


def test_sender_changes_are_never_predicted(wallet) -> None:
    before = TestCase.single(Transaction("Destroy", (), 0))
    after = before.with_value(ScalarRef.sender(0), 2)
    costs_before = execute_tx(wallet, StorageState({0: 0x1000}), before.focus).cost_vector
    costs_after = execute_tx(wallet, StorageState({0: 0x1000}), after.focus).cost_vector
    assert InputPredictor(random.Random(0)).predict(before, costs_before, after, costs_after) is None


def test_prediction_is_deterministic_under_a_seed() -> None:
    metrics = [MetricId(SourceLoc(line, 1), MetricKind.FLIP_TO_TRUE) for line in range(1, 6)]
    picks = [[InputPredictor(random.Random(seed)).choose_metric(metrics) for _ in range(10)] for seed in (4, 4)]
    assert picks[0] == picks[1]


def _goal(points, iterations_left: int = 4) -> PredictionGoal:
    return PredictionGoal(
        scalar=ScalarRef.arg(0, 0),
        metric=MetricId(SourceLoc(1, 1), MetricKind.FLIP_TO_TRUE),
        base=TestCase.single(Transaction("check", (0,))),
        points=points,
        iterations_left=iterations_left,
    )


def test_advance_goal_replaces_the_older_point() -> None:
    goal = _goal((DataPoint(0, 100), DataPoint(10, 80)))
    value, advanced = InputPredictor.advance_goal(goal, DataPoint(50, 4))
    assert value == 52
    assert advanced.points == (DataPoint(10, 80), DataPoint(50, 4))
    assert advanced.iterations_left == 3
    assert advanced.step == 2


def test_advance_goal_stops_on_success_and_exhaustion() -> None:
    goal = _goal((DataPoint(0, 100), DataPoint(10, 80)))
    assert InputPredictor.advance_goal(goal, DataPoint(50, 0)) is None
    assert InputPredictor.advance_goal(_goal(goal.points, iterations_left=0), DataPoint(50, 4)) is None


def test_single_step_goals_are_abandoned_after_the_first_miss() -> None:
    predictor = InputPredictor(random.Random(0), secant_iterations=1)
    prediction = Prediction(ScalarRef.arg(0, 0), 42, MetricId(SourceLoc(1, 1), MetricKind.FLIP_TO_TRUE))
    base = TestCase.single(Transaction("check", (0,)))
    metric_costs = [CostVector().record(prediction.metric, cost) for cost in (100, 80)]
    goal = predictor.start_goal(prediction, base, metric_costs[0], base.with_value(prediction.scalar, 10), metric_costs[1])
    assert goal.iterations_left == 0
    assert predictor.advance_goal(goal, DataPoint(42, 3)) is None


def test_iterating_converges_on_a_quadratic_root(nonlinear) -> None:
    def cost(a: int) -> int:
        result = execute_tx(nonlinear, StorageState(), Transaction("check", (a,)))
        return result.cost_vector.get(MetricId(find_loc(nonlinear, "a * (2000"), MetricKind.FLIP_TO_TRUE))

    first = secant_root(DataPoint(0, cost(0)), DataPoint(100, cost(100)))
    assert first == 122
    assert cost(first) != 0
    goal = _goal((DataPoint(0, cost(0)), DataPoint(100, cost(100))))
    value, _ = InputPredictor.advance_goal(goal, DataPoint(first, cost(first)))
    assert value == NONLINEAR_ROOT
    assert cost(value) == 0
