"""
Fuzz Case Module
Test cases (transaction sequences plus optional storage overrides) and
references to the scalars inside them that mutation may change.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Tuple

from contract_vm import Transaction
from value_domain import to_unsigned, wrap


class Mode(str, Enum):
    REGULAR = "regular"
    AGGRESSIVE = "aggressive"


class ScalarKind(str, Enum):
    ARG = "arg"
    SENDER = "sender"
    SLOT = "slot"


@dataclass(frozen=True, order=True)
class ScalarRef:
    """
    Address of one fuzzable scalar.

    ARG: argument `index` of transaction `tx`; SENDER: sender of transaction
    `tx`; SLOT: storage override of slot `index` (aggressive mode only).
    """

    kind: ScalarKind
    tx: int = -1
    index: int = 0

    @classmethod
    def arg(cls, tx: int, index: int) -> "ScalarRef":
        return cls(ScalarKind.ARG, tx, index)

    @classmethod
    def sender(cls, tx: int) -> "ScalarRef":
        return cls(ScalarKind.SENDER, tx, 0)

    @classmethod
    def slot(cls, slot: int) -> "ScalarRef":
        return cls(ScalarKind.SLOT, -1, to_unsigned(slot))

    @property
    def numeric(self) -> bool:
        """Sender indices are categorical, so they are never used for prediction."""
        return self.kind is not ScalarKind.SENDER

    def __str__(self) -> str:
        if self.kind is ScalarKind.SLOT:
            return f"slot[{self.index}]"
        if self.kind is ScalarKind.SENDER:
            return f"tx{self.tx}.sender"
        return f"tx{self.tx}.arg{self.index}"


@dataclass(frozen=True)
class TestCase:
    """A transaction sequence whose last transaction is the fuzz focus."""

    __test__ = False

    sequence: Tuple[Transaction, ...]
    mode: Mode = Mode.REGULAR
    state_overrides: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        if not self.sequence:
            raise ValueError("a test case needs at least one transaction")
        if self.state_overrides and self.mode is not Mode.AGGRESSIVE:
            raise ValueError("state overrides are only allowed in aggressive mode")

    @classmethod
    def single(cls, tx: Transaction) -> "TestCase":
        return cls((tx,))

    @property
    def fuzz_focus(self) -> int:
        return len(self.sequence) - 1

    @property
    def focus(self) -> Transaction:
        return self.sequence[-1]

    @property
    def prefix(self) -> Tuple[Transaction, ...]:
        return self.sequence[:-1]

    @property
    def overrides(self) -> Dict[int, int]:
        return dict(self.state_overrides)

    def scalars(self) -> List[ScalarRef]:
        """Every fuzzable scalar: all arguments and senders, plus overrides in aggressive mode."""
        refs: List[ScalarRef] = []
        for position, tx in enumerate(self.sequence):
            refs.extend(ScalarRef.arg(position, i) for i in range(len(tx.args)))
            refs.append(ScalarRef.sender(position))
        refs.extend(ScalarRef.slot(slot) for slot, _ in self.state_overrides)
        return refs

    def get(self, ref: ScalarRef) -> int:
        if ref.kind is ScalarKind.ARG:
            return self.sequence[ref.tx].args[ref.index]
        if ref.kind is ScalarKind.SENDER:
            return self.sequence[ref.tx].sender
        return self.overrides[ref.index]

    def with_value(self, ref: ScalarRef, value: int) -> "TestCase":
        """Copy of this test with one scalar replaced."""
        if ref.kind is ScalarKind.SLOT:
            overrides = tuple((slot, wrap(value) if slot == ref.index else old) for slot, old in self.state_overrides)
            return TestCase(self.sequence, self.mode, overrides)
        sequence = list(self.sequence)
        tx = sequence[ref.tx]
        sequence[ref.tx] = tx.with_sender(value) if ref.kind is ScalarKind.SENDER else tx.with_arg(ref.index, value)
        return TestCase(tuple(sequence), self.mode, self.state_overrides)

    def with_sequence(self, sequence: Tuple[Transaction, ...]) -> "TestCase":
        return TestCase(tuple(sequence), self.mode, self.state_overrides)

    def as_aggressive(self, overrides: Mapping[int, int]) -> "TestCase":
        return TestCase(self.sequence, Mode.AGGRESSIVE, tuple(sorted((s, wrap(v)) for s, v in overrides.items())))

    def as_regular(self) -> "TestCase":
        return TestCase(self.sequence, Mode.REGULAR)

    def single_delta(self, other: "TestCase") -> Optional[ScalarRef]:
        """
        The one scalar in which `other` differs from this test.

        Returns None when the two tests are identical, differ structurally
        (sequence shape, functions, mode, override slots), or differ in more
        than one scalar.
        """
        if self.mode is not other.mode or len(self.sequence) != len(other.sequence):
            return None
        if [slot for slot, _ in self.state_overrides] != [slot for slot, _ in other.state_overrides]:
            return None
        if any(a.function != b.function for a, b in zip(self.sequence, other.sequence)):
            return None
        changed = [ref for ref in self.scalars() if self.get(ref) != other.get(ref)]
        return changed[0] if len(changed) == 1 else None

    def to_dict(self) -> Dict[str, object]:
        data: Dict[str, object] = {
            "sequence": [tx.to_dict() for tx in self.sequence],
            "mode": self.mode.value,
        }
        if self.state_overrides:
            data["stateOverrides"] = {str(slot): value for slot, value in self.state_overrides}
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "TestCase":
        overrides = tuple(sorted((int(s), int(v)) for s, v in dict(data.get("stateOverrides", {})).items()))
        return cls(
            tuple(Transaction.from_dict(tx) for tx in data["sequence"]),
            Mode(data.get("mode", Mode.REGULAR.value)),
            overrides,
        )

    def __str__(self) -> str:
        text = ", ".join(str(tx) for tx in self.sequence)
        if self.state_overrides:
            text += " with " + ", ".join(f"[{s}]={v}" for s, v in self.state_overrides)
        return f"[{text}]"
