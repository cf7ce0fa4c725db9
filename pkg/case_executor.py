"""
Case Executor Module
Runs fuzz cases on the VM in regular or aggressive mode and derives their
path identifiers.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Tuple

from contract_parser import Contract
from contract_vm import ContractVM, ExecResult, Instrumentation, PathScope, StorageState, Transaction, path_id
from cost_metrics import CostVector
from fuzz_case import Mode, TestCase

logger = logging.getLogger(__name__)

PREFIX_CACHE_SIZE = 4096


@dataclass
class Execution:
    """Outcome of running one TestCase."""

    test: TestCase
    results: List[ExecResult]
    pid: str

    @property
    def focus_result(self) -> ExecResult:
        return self.results[-1]

    @property
    def cost_vector(self) -> CostVector:
        return self.results[-1].cost_vector

    @property
    def aggressive(self) -> bool:
        return self.test.mode is Mode.AGGRESSIVE


class CaseExecutor:
    """
    Executes test cases against one contract.

    Prefix executions are cached; the VM is deterministic so a cached
    prefix is indistinguishable from a fresh run.
    """

    def __init__(self, contract: Contract, instr: Instrumentation, scope: PathScope = PathScope.LAST_TX):
        self.contract = contract
        self.scope = scope
        self.vm = ContractVM(contract, instr)
        self._prefixes: "OrderedDict[Tuple[Transaction, ...], List[ExecResult]]" = OrderedDict()

    def deploy(self) -> StorageState:
        return self.vm.deploy()

    def _prefix_results(self, prefix: Tuple[Transaction, ...]) -> List[ExecResult]:
        if not prefix:
            return []
        cached = self._prefixes.get(prefix)
        if cached is not None:
            self._prefixes.move_to_end(prefix)
            return cached
        earlier = self._prefix_results(prefix[:-1])
        state = earlier[-1].post_state if earlier else self.vm.deploy()
        results = earlier + [self.vm.execute_tx(state, prefix[-1])]
        self._prefixes[prefix] = results
        if len(self._prefixes) > PREFIX_CACHE_SIZE:
            self._prefixes.popitem(last=False)
        return results

    def pre_state(self, test: TestCase) -> StorageState:
        """State the focus transaction starts from (before overrides)."""
        earlier = self._prefix_results(test.prefix)
        return earlier[-1].post_state if earlier else self.vm.deploy()

    def run(self, test: TestCase) -> Execution:
        """
        Execute a test case.

        Regular mode runs the whole sequence from a fresh deployment.
        Aggressive mode runs only the focus transaction, on the prefix's
        post-state with the test's storage overrides applied.
        """
        state = self.pre_state(test)
        if test.mode is Mode.AGGRESSIVE:
            focus = self.vm.execute_tx(state.with_overrides(test.overrides), test.focus)
            return Execution(test, [focus], path_id([focus], PathScope.LAST_TX))
        results = self._prefix_results(test.prefix) + [self.vm.execute_tx(state, test.focus)]
        return Execution(test, results, path_id(results, self.scope))

    def aggressive_view(self, test: TestCase) -> TestCase:
        """The aggressive twin of a regular test: every overridable slot at its current pre-state value."""
        state = self.pre_state(test)
        overrides: Dict[int, int] = {slot: state.get(slot) for slot in self.vm.overridable_slots()}
        return test.as_aggressive(overrides)
