"""
Sequence Fuzzer Module
Demand-driven transaction-sequence fuzzing.

Sequences only grow in front of a function after aggressive mode (which
fuzzes storage directly) has shown that some other persistent state would
reach a path regular mode has not covered yet.
"""

from __future__ import annotations

import logging
import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Deque, Dict, List, Optional, Set, Tuple

from case_executor import CaseExecutor, Execution
from contract_parser import Contract
from contract_vm import Transaction
from cost_metrics import MetricId, MetricKind
from fuzz_case import Mode, ScalarKind, ScalarRef, TestCase
from input_mutator import InputMutator

logger = logging.getLogger(__name__)

POOL_CAPACITY = 256
MAX_SEQUENCE_LENGTH = 8
FRESH_TX_PROBABILITY = 0.5
OP_WEIGHTS = (2, 1, 1)  # fuzz transaction : insert before focus : replace prefix


class MutationKind(str, Enum):
    ARG = "arg"
    SENDER = "sender"
    PREFIX_ARG = "prefixArg"
    OVERRIDE = "override"
    INSERT = "insert"
    REPLACE_PREFIX = "replacePrefix"

    @property
    def predictable(self) -> bool:
        """Single numeric-scalar changes; these are the only pairs handed to the predictor."""
        return self in (MutationKind.ARG, MutationKind.PREFIX_ARG, MutationKind.OVERRIDE)

    @property
    def changes_setup(self) -> bool:
        """Changes to what runs before or around the focus call, not to the call itself."""
        return self in (
            MutationKind.PREFIX_ARG,
            MutationKind.OVERRIDE,
            MutationKind.INSERT,
            MutationKind.REPLACE_PREFIX,
        )


@dataclass(frozen=True)
class Mutation:
    test: TestCase
    kind: MutationKind
    scalar: Optional[ScalarRef] = None


def classify_scalar(test: TestCase, ref: ScalarRef) -> MutationKind:
    if ref.kind is ScalarKind.SLOT:
        return MutationKind.OVERRIDE
    if ref.kind is ScalarKind.SENDER:
        return MutationKind.SENDER
    return MutationKind.ARG if ref.tx == test.fuzz_focus else MutationKind.PREFIX_ARG


@dataclass
class FunctionDemand:
    needs_sequences: bool = False
    target_pids: Set[str] = field(default_factory=set)
    # Store metric -> distance aggressive mode reached and regular mode has not.
    store_targets: Dict[MetricId, int] = field(default_factory=dict)


def store_distances(execution: Execution) -> Dict[MetricId, int]:
    return {metric: cost for metric, cost in execution.cost_vector.items() if metric.kind is MetricKind.STORE_DISTANCE}


class DemandState:
    """
    Per-function sequence demand, driven by aggressive-mode discoveries.

    A function needs sequences while aggressive mode holds a path regular
    mode has not covered, or a store that landed closer to the attack slot
    than any regular run of that store.
    """

    def __init__(self):
        self._demand: Dict[str, FunctionDemand] = {}
        self._regular_store_best: Dict[MetricId, int] = {}

    def _get(self, function: str) -> FunctionDemand:
        return self._demand.setdefault(function, FunctionDemand())

    def needs_sequences(self, function: str) -> bool:
        demand = self._demand.get(function)
        return demand is not None and demand.needs_sequences

    def target_pids(self, function: str) -> Set[str]:
        demand = self._demand.get(function)
        return set(demand.target_pids) if demand else set()

    def is_target(self, function: str, pid: str) -> bool:
        demand = self._demand.get(function)
        return demand is not None and pid in demand.target_pids

    def add_target(self, function: str, pid: str) -> bool:
        """Record an aggressive-only pid; True when the function's flag was newly raised."""
        demand = self._get(function)
        demand.target_pids.add(pid)
        raised = not demand.needs_sequences
        demand.needs_sequences = True
        return raised

    def cover(self, function: str, pid: str) -> bool:
        """Regular mode covered a pid; True when the function's flag was cleared."""
        demand = self._demand.get(function)
        if demand is None or pid not in demand.target_pids:
            return False
        demand.target_pids.discard(pid)
        return self._settle(demand)

    def add_store_target(self, function: str, metric: MetricId, distance: int) -> bool:
        """Record an aggressive-only store distance; True when the function's flag was newly raised."""
        best = self._regular_store_best.get(metric)
        if best is not None and distance >= best:
            return False
        demand = self._get(function)
        known = demand.store_targets.get(metric)
        if known is not None and known <= distance:
            return False
        demand.store_targets[metric] = distance
        raised = not demand.needs_sequences
        demand.needs_sequences = True
        return raised

    def cover_stores(self, function: str, distances: Dict[MetricId, int]) -> bool:
        """Regular mode reached these store distances; True when the function's flag was cleared."""
        for metric, distance in distances.items():
            best = self._regular_store_best.get(metric)
            if best is None or distance < best:
                self._regular_store_best[metric] = distance
        demand = self._demand.get(function)
        if demand is None or not demand.store_targets:
            return False
        for metric, distance in list(demand.store_targets.items()):
            best = self._regular_store_best.get(metric)
            if best is not None and best <= distance:
                del demand.store_targets[metric]
        return self._settle(demand)

    def store_targets(self, function: str) -> Dict[MetricId, int]:
        demand = self._demand.get(function)
        return dict(demand.store_targets) if demand else {}

    @staticmethod
    def _settle(demand: FunctionDemand) -> bool:
        if demand.needs_sequences and not demand.target_pids and not demand.store_targets:
            demand.needs_sequences = False
            return True
        return False

    def flagged_functions(self) -> List[str]:
        return sorted(name for name, demand in self._demand.items() if demand.needs_sequences)


class Pools:
    """
    Transactions and sequences that reached new paths and produced
    unseen persistent states. Each pool is FIFO-bounded.
    """

    def __init__(self, capacity: int = POOL_CAPACITY):
        self.capacity = capacity
        self.tx_pool: Deque[Tuple[Transaction, str]] = deque()
        self.seq_pool: Deque[Tuple[Tuple[Transaction, ...], str]] = deque()

    @staticmethod
    def _admit(pool: Deque, item, digest: str, capacity: int) -> bool:
        if any(seen == digest for _, seen in pool):
            return False
        pool.append((item, digest))
        if len(pool) > capacity:
            pool.popleft()
        return True

    def admit_tx(self, tx: Transaction, digest: str) -> bool:
        return self._admit(self.tx_pool, tx, digest, self.capacity)

    def admit_sequence(self, sequence: Tuple[Transaction, ...], digest: str) -> bool:
        return self._admit(self.seq_pool, tuple(sequence), digest, self.capacity)

    def transactions(self) -> List[Transaction]:
        return [tx for tx, _ in self.tx_pool]

    def sequences(self) -> List[Tuple[Transaction, ...]]:
        return [seq for seq, _ in self.seq_pool]


class SequenceFuzzer:
    """
    Applies the three sequence mutation operations and keeps the demand
    flags and pools up to date.
    """

    def __init__(
        self,
        contract: Contract,
        executor: CaseExecutor,
        mutator: InputMutator,
        rng: random.Random,
        max_sequence_length: int = MAX_SEQUENCE_LENGTH,
        unconditional: bool = False,
        fresh_tx_probability: float = FRESH_TX_PROBABILITY,
        emit: Optional[Callable[[str, dict], None]] = None,
    ):
        """
        Args:
            contract: contract under test
            executor: runs aggressive-mode cases
            mutator: single-scalar mutator used by operation 1
            rng: campaign random generator
            max_sequence_length: cap on sequence length
            unconditional: sequence operations are always available (no demand gating)
            fresh_tx_probability: chance that an insertion draws a fresh call instead of a pool entry
            emit: callback receiving (event kind, payload) for demand and pool events
        """
        self.contract = contract
        self.executor = executor
        self.mutator = mutator
        self.rng = rng
        self.max_sequence_length = max_sequence_length
        self.unconditional = unconditional
        self.fresh_tx_probability = fresh_tx_probability
        self.emit = emit or (lambda kind, payload: None)
        self.demand = DemandState()
        self.pools = Pools()

    def sequence_ops_enabled(self, function: str) -> bool:
        return self.unconditional or self.demand.needs_sequences(function)

    def mutate_sequence(self, test: TestCase) -> Mutation:
        """
        Mutate a regular-mode test with one of the three operations.

        Operation 1 fuzzes one scalar of any transaction; operation 2 inserts a
        transaction right before the focus; operation 3 replaces everything
        before the focus with a pooled sequence. Operations 2 and 3 need demand
        for the focus function and degrade to operation 1 when they cannot apply.
        """
        if test.mode is not Mode.REGULAR:
            raise ValueError("sequence mutation applies to regular-mode tests only")
        if self.sequence_ops_enabled(test.focus.function):
            op = self.rng.choices((1, 2, 3), weights=OP_WEIGHTS)[0]
            if op == 2 and len(test.sequence) < self.max_sequence_length:
                return self._insert_before_focus(test)
            if op == 3 and self.pools.seq_pool:
                prefix = self.rng.choice(self.pools.sequences())
                if len(prefix) + 1 <= self.max_sequence_length:
                    return Mutation(test.with_sequence(prefix + (test.focus,)), MutationKind.REPLACE_PREFIX)
        return self.fuzz_scalar(test)

    def fuzz_scalar(self, test: TestCase) -> Mutation:
        mutated, ref = self.mutator.fuzz_input(test)
        return Mutation(mutated, classify_scalar(test, ref), ref)

    def _insert_before_focus(self, test: TestCase) -> Mutation:
        pool = self.pools.transactions()
        if not pool or self.rng.random() < self.fresh_tx_probability:
            fn = self.rng.choice(self.contract.public_functions)
            inserted = Transaction(fn.name, (0,) * fn.arity, 0)
        else:
            inserted = self.rng.choice(pool)
        sequence = test.prefix + (inserted, test.focus)
        return Mutation(test.with_sequence(sequence), MutationKind.INSERT)

    def aggressive_fuzz(self, test: TestCase, is_known: Callable[[str], bool]) -> Tuple[Execution, List[str]]:
        """
        Execute an aggressive-mode test and record what it discovered.

        Args:
            test: aggressive-mode test (focus call plus storage overrides)
            is_known: whether a pid is already in the corpus

        Returns:
            (execution, pids newly recorded as sequence targets); the input
            itself never enters the corpus
        """
        if test.mode is not Mode.AGGRESSIVE:
            raise ValueError("aggressive_fuzz needs an aggressive-mode test")
        execution = self.executor.run(test)
        function = test.focus.function
        discoveries: List[str] = []
        if not is_known(execution.pid) and not self.demand.is_target(function, execution.pid):
            discoveries.append(execution.pid)
            raised = self.demand.add_target(function, execution.pid)
            logger.debug("aggressive mode reached new path %s of %s", execution.pid, function)
            if raised:
                self.emit("demandFlagSet", {"function": function, "pid": execution.pid})
        for metric, distance in store_distances(execution).items():
            if self.demand.add_store_target(function, metric, distance):
                logger.debug("aggressive mode stored %d slots from the attack slot at %s", distance, metric)
                self.emit("demandFlagSet", {"function": function, "pid": execution.pid, "metric": str(metric)})
        return execution, discoveries

    def admit_to_pools(self, execution: Execution) -> Tuple[bool, bool]:
        """Offer a newly admitted regular execution to both pools."""
        digest = execution.focus_result.post_state.digest()
        sequence = execution.test.sequence
        tx_admitted = self.pools.admit_tx(execution.test.focus, digest)
        seq_admitted = self.pools.admit_sequence(sequence, digest)
        if tx_admitted or seq_admitted:
            self.emit(
                "poolAdmit",
                {
                    "digest": digest,
                    "tx": str(execution.test.focus) if tx_admitted else None,
                    "sequence": [str(tx) for tx in sequence] if seq_admitted else None,
                },
            )
        return tx_admitted, seq_admitted

    def update_demand(self, function: str, covered_pid: str) -> bool:
        """Regular mode covered a pid; clear the function's demand when no targets remain."""
        cleared = self.demand.cover(function, covered_pid)
        if cleared:
            self.emit("demandFlagCleared", {"function": function, "pid": covered_pid})
        return cleared

    def update_store_demand(self, execution: Execution) -> bool:
        """A regular run reached its stores; clear the focus function's demand once no closer aggressive store remains."""
        function = execution.test.focus.function
        cleared = self.demand.cover_stores(function, store_distances(execution))
        if cleared:
            self.emit("demandFlagCleared", {"function": function, "pid": execution.pid})
        return cleared
