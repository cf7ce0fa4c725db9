"""
Cost Metrics Module
Branch-distance and store-distance cost functions, metric identities and the
per-execution cost vector.

A cost is a non-negative distance that becomes zero exactly when its target
(flipping a branch, or storing to the attack slot) is reached.
"""

from __future__ import annotations

from enum import Enum
from typing import Dict, Iterator, NamedTuple, Optional, Tuple

from contract_parser import ComparisonOp, SourceLoc
from value_domain import WORD_MODULUS, to_unsigned


class MetricKind(str, Enum):
    FLIP_TO_FALSE = "flipToFalse"
    FLIP_TO_TRUE = "flipToTrue"
    STORE_DISTANCE = "storeDistance"


class MergePolicy(str, Enum):
    """How repeated hits of one metric in a single execution are merged."""

    MIN = "min"
    FIRST = "first"


class MetricId(NamedTuple):
    loc: SourceLoc
    kind: MetricKind

    def __str__(self) -> str:
        return f"{self.loc}:{self.kind.value}"

    @classmethod
    def parse(cls, text: str) -> "MetricId":
        line, col, kind = text.split(":")
        return cls(SourceLoc(int(line), int(col)), MetricKind(kind))


def holds(op: ComparisonOp, left: int, right: int, unsigned: bool = False) -> bool:
    """Evaluate a comparison under the requested signedness."""
    if unsigned:
        left, right = to_unsigned(left), to_unsigned(right)
    if op is ComparisonOp.EQ:
        return left == right
    if op is ComparisonOp.NE:
        return left != right
    if op is ComparisonOp.LT:
        return left < right
    if op is ComparisonOp.LE:
        return left <= right
    if op is ComparisonOp.GT:
        return left > right
    return left >= right


def _eq_costs(left: int, right: int) -> Tuple[int, int]:
    if left == right:
        return 1, 0
    return 0, abs(left - right)


def _lt_costs(left: int, right: int) -> Tuple[int, int]:
    if left < right:
        return right - left, 0
    return 0, left - right + 1


def _le_costs(left: int, right: int) -> Tuple[int, int]:
    if left <= right:
        return right - left + 1, 0
    return 0, left - right


def branch_costs(op: ComparisonOp, left: int, right: int, unsigned: bool = False) -> Tuple[int, int]:
    """
    Compute both flip costs of a comparison.

    Operands are canonical words; Python ints are unbounded so no distance wraps.

    Args:
        op: comparison operator
        left: left operand
        right: right operand
        unsigned: compare as unsigned words

    Returns:
        (cost to make the condition false, cost to make it true); exactly one is zero
    """
    if unsigned:
        left, right = to_unsigned(left), to_unsigned(right)
    if op is ComparisonOp.EQ:
        return _eq_costs(left, right)
    if op is ComparisonOp.NE:
        to_false, to_true = _eq_costs(left, right)
        return to_true, to_false
    if op is ComparisonOp.LT:
        return _lt_costs(left, right)
    if op is ComparisonOp.LE:
        return _le_costs(left, right)
    if op is ComparisonOp.GT:
        return _lt_costs(right, left)
    return _le_costs(right, left)


def distance_sides(op: ComparisonOp, left: int, right: int, unsigned: bool = False) -> Tuple[int, int]:
    """
    Side of the root each flip cost was observed on.

    Only the absolute-distance costs of == and != are two-sided; their side is
    the sign of left - right. One-sided costs report 0.
    """
    if op not in (ComparisonOp.EQ, ComparisonOp.NE):
        return 0, 0
    if unsigned:
        left, right = to_unsigned(left), to_unsigned(right)
    side = (left > right) - (left < right)
    if op is ComparisonOp.EQ:
        return 0, side
    return side, 0


def store_cost(target_slot: int, attack_slot: int) -> int:
    """Shorter circular distance between two slots on the 2^64 ring."""
    forward = (to_unsigned(target_slot) - to_unsigned(attack_slot)) % WORD_MODULUS
    return min(forward, WORD_MODULUS - forward)


def store_side(target_slot: int, attack_slot: int) -> int:
    """+1 when the target lies clockwise of the attack slot along the shorter arc, -1 otherwise, 0 on a hit."""
    forward = (to_unsigned(target_slot) - to_unsigned(attack_slot)) % WORD_MODULUS
    if forward == 0:
        return 0
    return 1 if forward <= WORD_MODULUS // 2 else -1


class CostVector:
    """Costs observed during one execution, keyed by MetricId."""

    __slots__ = ("_costs", "_sides", "policy")

    def __init__(self, policy: MergePolicy = MergePolicy.MIN):
        self._costs: Dict[MetricId, int] = {}
        self._sides: Dict[MetricId, int] = {}
        self.policy = policy

    def record(self, metric: MetricId, cost: int, side: int = 0) -> "CostVector":
        """
        Merge one observation into the vector.

        Under MIN a metric reached several times keeps its closest approach;
        under FIRST the first observation sticks.
        """
        if cost < 0:
            raise ValueError(f"negative cost {cost} for {metric}")
        existing = self._costs.get(metric)
        if existing is None or (self.policy is MergePolicy.MIN and cost < existing):
            self._costs[metric] = cost
            self._sides[metric] = side
        return self

    def get(self, metric: MetricId) -> Optional[int]:
        return self._costs.get(metric)

    def side(self, metric: MetricId) -> int:
        return self._sides.get(metric, 0)

    def __contains__(self, metric: object) -> bool:
        return metric in self._costs

    def __iter__(self) -> Iterator[MetricId]:
        return iter(self._costs)

    def __len__(self) -> int:
        return len(self._costs)

    def items(self):
        return self._costs.items()

    def nonzero(self) -> Dict[MetricId, int]:
        return {metric: cost for metric, cost in self._costs.items() if cost}

    def to_dict(self) -> Dict[str, int]:
        return {str(metric): cost for metric, cost in sorted(self._costs.items())}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CostVector):
            return NotImplemented
        return self._costs == other._costs and self._sides == other._sides

    def __repr__(self) -> str:
        return f"CostVector({self.to_dict()})"


def record(vector: CostVector, metric: MetricId, cost: int, side: int = 0) -> CostVector:
    """Functional alias for CostVector.record."""
    return vector.record(metric, cost, side)


def record_comparison(
    vector: CostVector,
    loc: SourceLoc,
    op: ComparisonOp,
    left: int,
    right: int,
    unsigned: bool = False,
) -> bool:
    """Record both flip metrics of an evaluated condition and return its outcome."""
    to_false, to_true = branch_costs(op, left, right, unsigned)
    false_side, true_side = distance_sides(op, left, right, unsigned)
    vector.record(MetricId(loc, MetricKind.FLIP_TO_FALSE), to_false, false_side)
    vector.record(MetricId(loc, MetricKind.FLIP_TO_TRUE), to_true, true_side)
    return to_false != 0
