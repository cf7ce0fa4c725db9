"""
Input Predictor Module
Proposes input values that drive a cost metric to zero by fitting a straight
line through two (input value, cost) observations.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import List, Optional, Tuple

from cost_metrics import CostVector, MetricId
from fuzz_case import ScalarRef, TestCase
from value_domain import clamp

logger = logging.getLogger(__name__)

DEFAULT_SECANT_ITERATIONS = 5


class PredictionError(RuntimeError):
    """The two inputs handed to predict do not differ in exactly one scalar."""


@dataclass(frozen=True)
class DataPoint:
    input_value: int
    cost: int


@dataclass(frozen=True)
class Prediction:
    scalar: ScalarRef
    value: int
    metric: MetricId


@dataclass(frozen=True)
class PredictionGoal:
    """
    An in-flight root search on one metric.

    `base` is the test the predicted values are written into; `points`
    holds the two most recent observations, oldest first.
    """

    scalar: ScalarRef
    metric: MetricId
    base: TestCase
    points: Tuple[DataPoint, DataPoint]
    iterations_left: int
    step: int = 1

    def candidate(self, value: int) -> TestCase:
        return self.base.with_value(self.scalar, value)


def round_half_away(value: Fraction) -> int:
    """Round an exact rational to the nearest int, ties away from zero."""
    magnitude = (abs(value.numerator) * 2 + value.denominator) // (2 * value.denominator)
    return magnitude if value >= 0 else -magnitude


def secant_root(p0: DataPoint, p1: DataPoint) -> Optional[int]:
    """
    Root of the line through two observations.

    Returns:
        round(i1 - c1 * (i1 - i0) / (c1 - c0)), clamped to the word range, or
        None for a flat line or when the root is one of the two inputs
    """
    if p0.input_value == p1.input_value:
        raise ValueError("secant points must have distinct inputs")
    if p0.cost == p1.cost:
        return None
    root = Fraction(p1.input_value) - Fraction(p1.cost * (p1.input_value - p0.input_value), p1.cost - p0.cost)
    value = clamp(round_half_away(root))
    if value in (p0.input_value, p1.input_value):
        return None
    return value


class InputPredictor:
    """Chooses a prediction metric and runs single-shot or iterative Secant steps."""

    def __init__(self, rng: random.Random, secant_iterations: int = DEFAULT_SECANT_ITERATIONS, same_side_only: bool = False):
        self.rng = rng
        self.secant_iterations = secant_iterations
        self.same_side_only = same_side_only

    @staticmethod
    def eligible_metrics(cost: CostVector, cost2: CostVector, same_side_only: bool = False) -> List[MetricId]:
        """
        Metrics usable for prediction: reached in both runs with nonzero,
        different costs. With same_side_only, a two-sided distance must also
        have been observed on the same side of its root in both runs.
        """
        eligible = []
        for metric, c0 in cost.items():
            c1 = cost2.get(metric)
            if c1 is None or c0 == 0 or c1 == 0 or c0 == c1:
                continue
            if same_side_only and cost.side(metric) != cost2.side(metric):
                continue
            eligible.append(metric)
        return sorted(eligible)

    def choose_metric(self, eligible: List[MetricId]) -> MetricId:
        return self.rng.choice(eligible)

    def predict(
        self,
        test: TestCase,
        cost: CostVector,
        test2: TestCase,
        cost2: CostVector,
        exclude: Optional[MetricId] = None,
    ) -> Optional[Prediction]:
        """
        Predict a value for the scalar in which test2 differs from test.

        `exclude` names a metric that must not be chosen, such as the one a
        finished goal on the same scalar was already spent on.

        Raises:
            PredictionError: the tests do not differ in exactly one scalar
        """
        scalar = test.single_delta(test2)
        if scalar is None:
            raise PredictionError(f"{test} and {test2} do not differ in exactly one scalar")
        if not scalar.numeric:
            return None
        eligible = [metric for metric in self.eligible_metrics(cost, cost2, self.same_side_only) if metric != exclude]
        if not eligible:
            return None
        metric = self.choose_metric(eligible)
        p0 = DataPoint(test.get(scalar), cost.get(metric))
        p1 = DataPoint(test2.get(scalar), cost2.get(metric))
        value = secant_root(p0, p1)
        if value is None:
            return None
        logger.debug("predict %s=%d from %s via %s", scalar, value, (p0, p1), metric)
        return Prediction(scalar, value, metric)

    def start_goal(self, prediction: Prediction, base: TestCase, cost: CostVector, test2: TestCase, cost2: CostVector) -> PredictionGoal:
        points = (
            DataPoint(base.get(prediction.scalar), cost.get(prediction.metric)),
            DataPoint(test2.get(prediction.scalar), cost2.get(prediction.metric)),
        )
        return PredictionGoal(prediction.scalar, prediction.metric, base, points, self.secant_iterations - 1)

    @staticmethod
    def advance_goal(goal: PredictionGoal, new_point: DataPoint) -> Optional[Tuple[int, PredictionGoal]]:
        """
        Take the next Secant step after observing a predicted input.

        Returns:
            (next value, updated goal), or None when the goal is satisfied
            (zero cost), out of iterations, or the line is degenerate
        """
        if new_point.cost == 0 or goal.iterations_left <= 0:
            return None
        points = (goal.points[1], new_point)
        if points[0].input_value == points[1].input_value:
            return None
        value = secant_root(*points)
        if value is None:
            return None
        return value, replace(goal, points=points, iterations_left=goal.iterations_left - 1, step=goal.step + 1)
