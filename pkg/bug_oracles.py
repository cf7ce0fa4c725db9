"""
Bug Oracles Module
Detects assertion violations / checked errors (SWC-110) and writes to the
attack slot (SWC-124) on regular-mode executions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

from contract_parser import SourceLoc
from contract_vm import ExecResult, TerminationKind, Transaction

logger = logging.getLogger(__name__)


class BugKind(str, Enum):
    ASSERT_VIOLATION = "SWC-110"
    ARBITRARY_WRITE = "SWC-124"


@dataclass(frozen=True)
class Witness:
    """Everything needed to replay a finding outside the campaign."""

    sequence: Tuple[Transaction, ...]
    seed: int
    exec_index: int
    attack_slot: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sequence": [tx.to_dict() for tx in self.sequence],
            "seed": self.seed,
            "execIndex": self.exec_index,
            "attackSlot": self.attack_slot,
        }


@dataclass
class BugFinding:
    kind: BugKind
    loc: SourceLoc
    witness: Optional[Witness] = None
    time_to_bug_seconds: float = 0.0
    time_to_bug_execs: int = 0
    detail: str = ""

    @property
    def key(self) -> Tuple[BugKind, SourceLoc]:
        return self.kind, self.loc

    def to_dict(self, include_wall_time: bool = True) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "kind": self.kind.value,
            "loc": str(self.loc),
            "detail": self.detail,
            "timeToBugExecs": self.time_to_bug_execs,
        }
        if include_wall_time:
            data["timeToBugSeconds"] = round(self.time_to_bug_seconds, 3)
        data["witness"] = self.witness.to_dict() if self.witness else None
        return data


class BugOracle:
    """Finds bugs in execution results and remembers which (kind, location) pairs were reported."""

    def __init__(self, attack_slot: Optional[int] = None, step_budget_is_bug: bool = True):
        self.attack_slot = attack_slot
        self.step_budget_is_bug = step_budget_is_bug
        self._seen: Set[Tuple[BugKind, SourceLoc]] = set()
        self.findings: List[BugFinding] = []

    def check(self, result: ExecResult) -> List[BugFinding]:
        """
        Inspect one regular-mode transaction result.

        Returns:
            Findings in this result; require failures are validation, not bugs
        """
        findings: List[BugFinding] = []
        termination = result.termination
        if termination.kind is TerminationKind.ASSERT_FAILED:
            findings.append(BugFinding(BugKind.ASSERT_VIOLATION, termination.loc, detail="assertion failed"))
        elif termination.kind is TerminationKind.CHECKED_ERROR:
            if self.step_budget_is_bug or termination.reason != "step budget exhausted":
                findings.append(BugFinding(BugKind.ASSERT_VIOLATION, termination.loc, detail=termination.reason))
        # A reverted transaction leaves no write behind.
        if self.attack_slot is not None and not termination.aborted:
            for loc, slot in result.store_events:
                if slot == self.attack_slot:
                    findings.append(BugFinding(BugKind.ARBITRARY_WRITE, loc, detail=f"store to slot {slot:#x}"))
        return findings

    def check_all(self, results: Sequence[ExecResult]) -> List[BugFinding]:
        findings = []
        for result in results:
            findings.extend(self.check(result))
        return findings

    def dedup(self, finding: BugFinding, seen: Optional[Set[Tuple[BugKind, SourceLoc]]] = None) -> bool:
        """True when (kind, loc) has not been reported before; marks it as reported."""
        seen = self._seen if seen is None else seen
        if finding.key in seen:
            return False
        seen.add(finding.key)
        if seen is self._seen:
            self.findings.append(finding)
        return True
