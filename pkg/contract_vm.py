"""
Contract VM Module
Deploys contracts and executes transactions with runtime instrumentation:
branch traces, cost metrics, executed locations and persistent-store events.

Runtime faults are data: every transaction ends in a Termination, never an
exception.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

from contract_parser import (
    AssertStmt,
    AssignLocal,
    BinaryExpr,
    Condition,
    Contract,
    DeclKind,
    ElementExpr,
    HaltStmt,
    IfStmt,
    IntLiteral,
    LengthExpr,
    LetStmt,
    LocalVar,
    NegateExpr,
    PopStmt,
    PushStmt,
    RequireStmt,
    ReturnStmt,
    SenderExpr,
    SourceLoc,
    StorageVar,
    StoreElement,
    StoreScalar,
    WhileStmt,
)
from cost_metrics import CostVector, MergePolicy, MetricId, MetricKind, record_comparison, store_cost, store_side
from value_domain import WORD_MASK, to_unsigned, wrap

logger = logging.getLogger(__name__)

# Fixed sender addresses; index 0 deploys.
ACCOUNTS: Tuple[int, ...] = (0x1000, 0x2000, 0x3000, 0x4000)
DEPLOYER_INDEX = 0
STEP_BUDGET = 100_000


class TerminationKind(str, Enum):
    NORMAL = "normal"
    REQUIRE_FAILED = "requireFailed"
    ASSERT_FAILED = "assertFailed"
    CHECKED_ERROR = "checkedError"
    HALT_CALLED = "haltCalled"


class PathScope(str, Enum):
    LAST_TX = "lastTx"
    WHOLE_SEQUENCE = "wholeSequence"


@dataclass(frozen=True)
class Termination:
    kind: TerminationKind
    loc: Optional[SourceLoc] = None
    reason: str = ""

    @property
    def aborted(self) -> bool:
        return self.kind in (
            TerminationKind.REQUIRE_FAILED,
            TerminationKind.ASSERT_FAILED,
            TerminationKind.CHECKED_ERROR,
        )

    def __str__(self) -> str:
        if self.loc is None:
            return self.kind.value
        return f"{self.kind.value}@{self.loc}"


NORMAL = Termination(TerminationKind.NORMAL)


class DeploymentError(RuntimeError):
    """The constructor aborted, so the contract cannot be fuzzed."""

    def __init__(self, contract: str, termination: Termination):
        self.termination = termination
        super().__init__(f"deployment of {contract} failed: {termination}")


@dataclass(frozen=True)
class Transaction:
    """One call of a contract function."""

    function: str
    args: Tuple[int, ...] = ()
    sender: int = 0

    def with_arg(self, index: int, value: int) -> "Transaction":
        args = list(self.args)
        args[index] = wrap(value)
        return Transaction(self.function, tuple(args), self.sender)

    def with_sender(self, sender: int) -> "Transaction":
        return Transaction(self.function, self.args, sender)

    def to_dict(self) -> Dict[str, object]:
        return {"function": self.function, "args": list(self.args), "sender": self.sender}

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> "Transaction":
        return cls(str(data["function"]), tuple(int(a) for a in data.get("args", [])), int(data.get("sender", 0)))

    def __str__(self) -> str:
        args = ", ".join(str(a) for a in self.args)
        return f"{self.function}({args})@{self.sender}"


class StorageState:
    """Persistent storage: unsigned slot -> signed word, zero values omitted."""

    __slots__ = ("_slots", "_digest")

    def __init__(self, slots: Optional[Mapping[int, int]] = None):
        self._slots: Dict[int, int] = {}
        self._digest: Optional[str] = None
        for slot, value in (slots or {}).items():
            value = wrap(value)
            if value:
                self._slots[to_unsigned(slot)] = value

    @classmethod
    def _adopt(cls, slots: Dict[int, int]) -> "StorageState":
        state = cls.__new__(cls)
        state._slots = slots
        state._digest = None
        return state

    def get(self, slot: int) -> int:
        return self._slots.get(to_unsigned(slot), 0)

    def items(self):
        return self._slots.items()

    def working_copy(self) -> Dict[int, int]:
        return dict(self._slots)

    def with_overrides(self, overrides: Mapping[int, int]) -> "StorageState":
        slots = dict(self._slots)
        for slot, value in overrides.items():
            value = wrap(value)
            if value:
                slots[to_unsigned(slot)] = value
            else:
                slots.pop(to_unsigned(slot), None)
        return StorageState._adopt(slots)

    def digest(self) -> str:
        """Digest of the normalized contents; absent and zero slots are indistinguishable."""
        if self._digest is None:
            hasher = hashlib.blake2b(digest_size=16)
            for slot, value in sorted(self._slots.items()):
                hasher.update(f"{slot}={value};".encode("ascii"))
            self._digest = hasher.hexdigest()
        return self._digest

    def to_dict(self) -> Dict[str, int]:
        return {str(slot): value for slot, value in sorted(self._slots.items())}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StorageState):
            return NotImplemented
        return self._slots == other._slots

    def __hash__(self) -> int:
        return hash(self.digest())

    def __repr__(self) -> str:
        return f"StorageState({self.to_dict()})"


@dataclass(frozen=True)
class Instrumentation:
    """Runtime hooks applied to every transaction."""

    attack_slot: Optional[int] = None
    merge_policy: MergePolicy = MergePolicy.MIN
    step_budget: int = STEP_BUDGET


@dataclass
class ExecResult:
    function: str
    post_state: StorageState
    branch_trace: Tuple[Tuple[SourceLoc, bool], ...]
    cost_vector: CostVector
    executed_locs: FrozenSet[SourceLoc]
    termination: Termination
    store_events: Tuple[Tuple[SourceLoc, int], ...] = ()
    attack_hits: Tuple[SourceLoc, ...] = ()
    return_value: Optional[int] = None

    def path_signature(self) -> str:
        trace = ",".join(f"{loc}{'T' if taken else 'F'}" for loc, taken in self.branch_trace)
        hits = ",".join(str(loc) for loc in self.attack_hits)
        return f"{self.function}|{trace}|{self.termination.kind.value}|{hits}"


class _Abort(Exception):
    def __init__(self, termination: Termination):
        self.termination = termination


class _Return(Exception):
    def __init__(self, value: Optional[int]):
        self.value = value


class _Halt(Exception):
    def __init__(self, loc: SourceLoc):
        self.loc = loc


class _Frame:
    """Mutable state of one transaction being interpreted."""

    __slots__ = ("storage", "locals", "sender", "trace", "costs", "executed", "stores", "hits", "steps", "loops")

    def __init__(self, storage: Dict[int, int], sender: int, policy: MergePolicy):
        self.storage = storage
        self.locals: Dict[str, int] = {}
        self.sender = sender
        self.trace: List[Tuple[SourceLoc, bool]] = []
        self.costs = CostVector(policy)
        self.executed: set = set()
        self.stores: List[Tuple[SourceLoc, int]] = []
        self.hits: List[SourceLoc] = []
        self.steps = 0
        self.loops: List[SourceLoc] = []


class ContractVM:
    """
    Tree-walking interpreter for one contract.

    Each AST node type is dispatched to an `_exec_*` or `_eval_*` method.
    """

    def __init__(self, contract: Contract, instr: Optional[Instrumentation] = None):
        self.contract = contract
        self.instr = instr or Instrumentation()
        self._exec_dispatch: Dict[type, Callable] = {
            LetStmt: self._exec_let,
            AssignLocal: self._exec_assign_local,
            StoreScalar: self._exec_store_scalar,
            StoreElement: self._exec_store_element,
            PushStmt: self._exec_push,
            PopStmt: self._exec_pop,
            RequireStmt: self._exec_require,
            AssertStmt: self._exec_assert,
            IfStmt: self._exec_if,
            WhileStmt: self._exec_while,
            ReturnStmt: self._exec_return,
            HaltStmt: self._exec_halt,
        }
        self._eval_dispatch: Dict[type, Callable] = {
            IntLiteral: lambda frame, node: node.value,
            LocalVar: lambda frame, node: frame.locals[node.name],
            StorageVar: self._eval_storage_var,
            SenderExpr: lambda frame, node: frame.sender,
            LengthExpr: self._eval_length,
            ElementExpr: self._eval_element,
            NegateExpr: lambda frame, node: wrap(-self._eval(frame, node.operand)),
            BinaryExpr: self._eval_binary,
        }
        self._deployed: Dict[int, StorageState] = {}

    # --- layout helpers ---

    def element_slot(self, array: str, index: int) -> int:
        return (self.contract.slot_of(array) + 1 + to_unsigned(index)) & WORD_MASK

    def overridable_slots(self) -> List[int]:
        """Declared scalar slots and array length slots, in layout order."""
        return [self.contract.slot_of(decl.name) for decl in self.contract.decls]

    # --- public operations ---

    def deploy(self, deployer: int = DEPLOYER_INDEX) -> StorageState:
        """
        Build the initial state: declaration initializers, then the init function.

        Raises:
            DeploymentError: init aborted
        """
        cached = self._deployed.get(deployer)
        if cached is not None:
            return cached
        initial = {
            self.contract.slot_of(decl.name): decl.initializer
            for decl in self.contract.decls
            if decl.kind is DeclKind.SCALAR and decl.initializer
        }
        state = StorageState(initial)
        if self.contract.init is not None:
            result = self._run_function(self.contract.init, state, (), deployer)
            if result.termination.aborted:
                raise DeploymentError(self.contract.name, result.termination)
            state = result.post_state
        self._deployed[deployer] = state
        return state

    def validate(self, tx: Transaction):
        fn = self.contract.functions.get(tx.function)
        if fn is None:
            raise ValueError(f"{self.contract.name} has no function {tx.function!r}")
        if len(tx.args) != fn.arity:
            raise ValueError(f"{tx.function} takes {fn.arity} arguments, got {len(tx.args)}")
        if not 0 <= tx.sender < len(ACCOUNTS):
            raise ValueError(f"sender index {tx.sender} out of range")

    def execute_tx(self, state: StorageState, tx: Transaction) -> ExecResult:
        """Execute one transaction against a state; the state itself is never mutated."""
        self.validate(tx)
        return self._run_function(self.contract.functions[tx.function], state, tx.args, tx.sender)

    def run_sequence(self, sequence: Sequence[Transaction], state: Optional[StorageState] = None) -> List[ExecResult]:
        """Deploy fresh (unless a state is given) and thread state through the sequence."""
        if not sequence:
            raise ValueError("empty transaction sequence")
        current = self.deploy() if state is None else state
        results = []
        for tx in sequence:
            result = self.execute_tx(current, tx)
            results.append(result)
            current = result.post_state
        return results

    # --- interpreter core ---

    def _run_function(self, fn, state: StorageState, args: Sequence[int], sender: int) -> ExecResult:
        frame = _Frame(state.working_copy(), ACCOUNTS[sender], self.instr.merge_policy)
        for name, value in zip(fn.params, args):
            frame.locals[name] = wrap(value)
        termination = NORMAL
        return_value = None
        try:
            self._exec_block(frame, fn.body)
        except _Return as ret:
            return_value = ret.value
        except _Halt as halt:
            termination = Termination(TerminationKind.HALT_CALLED, halt.loc)
        except _Abort as abort:
            termination = abort.termination
        post_state = state if termination.aborted else StorageState._adopt(frame.storage)
        return ExecResult(
            function=fn.name,
            post_state=post_state,
            branch_trace=tuple(frame.trace),
            cost_vector=frame.costs,
            executed_locs=frozenset(frame.executed),
            termination=termination,
            store_events=tuple(frame.stores),
            attack_hits=tuple(frame.hits),
            return_value=return_value,
        )

    def _exec_block(self, frame: _Frame, body):
        budget = self.instr.step_budget
        for stmt in body:
            frame.steps += 1
            if frame.steps > budget:
                loc = frame.loops[-1] if frame.loops else stmt.loc
                raise _Abort(Termination(TerminationKind.CHECKED_ERROR, loc, "step budget exhausted"))
            frame.executed.add(stmt.loc)
            self._exec_dispatch[type(stmt)](frame, stmt)

    def _condition(self, frame: _Frame, cond: Condition) -> bool:
        left = self._eval(frame, cond.left)
        right = self._eval(frame, cond.right)
        outcome = record_comparison(frame.costs, cond.loc, cond.op, left, right, cond.unsigned)
        frame.executed.add(cond.loc)
        frame.trace.append((cond.loc, outcome))
        return outcome

    def _store(self, frame: _Frame, slot: int, value: int, loc: SourceLoc):
        slot &= WORD_MASK
        if value:
            frame.storage[slot] = value
        else:
            frame.storage.pop(slot, None)
        frame.stores.append((loc, slot))
        attack = self.instr.attack_slot
        if attack is not None:
            cost = store_cost(slot, attack)
            frame.costs.record(MetricId(loc, MetricKind.STORE_DISTANCE), cost, store_side(slot, attack))
            if cost == 0:
                frame.hits.append(loc)

    def _exec_let(self, frame: _Frame, stmt: LetStmt):
        frame.locals[stmt.name] = self._eval(frame, stmt.value)

    def _exec_assign_local(self, frame: _Frame, stmt: AssignLocal):
        frame.locals[stmt.name] = self._eval(frame, stmt.value)

    def _exec_store_scalar(self, frame: _Frame, stmt: StoreScalar):
        self._store(frame, self.contract.slot_of(stmt.name), self._eval(frame, stmt.value), stmt.loc)

    def _exec_store_element(self, frame: _Frame, stmt: StoreElement):
        slot = self.element_slot(stmt.array, self._eval(frame, stmt.index))
        self._store(frame, slot, self._eval(frame, stmt.value), stmt.loc)

    def _exec_push(self, frame: _Frame, stmt: PushStmt):
        base = self.contract.slot_of(stmt.array)
        length = to_unsigned(frame.storage.get(base, 0))
        value = self._eval(frame, stmt.value)
        self._store(frame, base + 1 + length, value, stmt.loc)
        self._store(frame, base, wrap(length + 1), stmt.loc)

    def _exec_pop(self, frame: _Frame, stmt: PopStmt):
        base = self.contract.slot_of(stmt.array)
        self._store(frame, base, wrap(frame.storage.get(base, 0) - 1), stmt.loc)

    def _exec_require(self, frame: _Frame, stmt: RequireStmt):
        if not self._condition(frame, stmt.cond):
            raise _Abort(Termination(TerminationKind.REQUIRE_FAILED, stmt.loc))

    def _exec_assert(self, frame: _Frame, stmt: AssertStmt):
        if not self._condition(frame, stmt.cond):
            raise _Abort(Termination(TerminationKind.ASSERT_FAILED, stmt.loc))

    def _exec_if(self, frame: _Frame, stmt: IfStmt):
        if self._condition(frame, stmt.cond):
            self._exec_block(frame, stmt.then_body)
        elif stmt.else_body:
            self._exec_block(frame, stmt.else_body)

    def _exec_while(self, frame: _Frame, stmt: WhileStmt):
        frame.loops.append(stmt.loc)
        budget = self.instr.step_budget
        while self._condition(frame, stmt.cond):
            frame.steps += 1
            if frame.steps > budget:
                raise _Abort(Termination(TerminationKind.CHECKED_ERROR, stmt.loc, "step budget exhausted"))
            self._exec_block(frame, stmt.body)
        frame.loops.pop()

    def _exec_return(self, frame: _Frame, stmt: ReturnStmt):
        raise _Return(None if stmt.value is None else self._eval(frame, stmt.value))

    def _exec_halt(self, frame: _Frame, stmt: HaltStmt):
        raise _Halt(stmt.loc)

    # --- expressions ---

    def _eval(self, frame: _Frame, node) -> int:
        return self._eval_dispatch[type(node)](frame, node)

    def _eval_storage_var(self, frame: _Frame, node: StorageVar) -> int:
        return frame.storage.get(self.contract.slot_of(node.name), 0)

    def _eval_length(self, frame: _Frame, node: LengthExpr) -> int:
        return frame.storage.get(self.contract.slot_of(node.array), 0)

    def _eval_element(self, frame: _Frame, node: ElementExpr) -> int:
        return frame.storage.get(self.element_slot(node.array, self._eval(frame, node.index)), 0)

    def _eval_binary(self, frame: _Frame, node: BinaryExpr) -> int:
        left = self._eval(frame, node.left)
        right = self._eval(frame, node.right)
        op = node.op
        if op == "+":
            return wrap(left + right)
        if op == "-":
            return wrap(left - right)
        if op == "*":
            return wrap(left * right)
        if right == 0:
            raise _Abort(Termination(TerminationKind.CHECKED_ERROR, node.loc, "division by zero"))
        # Signed truncating division; INT_MIN / -1 wraps back to INT_MIN.
        quotient = abs(left) // abs(right)
        if (left < 0) != (right < 0):
            quotient = -quotient
        if op == "/":
            return wrap(quotient)
        return wrap(left - quotient * right)


def deploy(contract: Contract, deployer: int = DEPLOYER_INDEX) -> StorageState:
    return ContractVM(contract).deploy(deployer)


def execute_tx(
    contract: Contract,
    state: StorageState,
    tx: Transaction,
    instr: Optional[Instrumentation] = None,
) -> ExecResult:
    return ContractVM(contract, instr).execute_tx(state, tx)


def run_sequence(
    contract: Contract,
    sequence: Sequence[Transaction],
    instr: Optional[Instrumentation] = None,
) -> List[ExecResult]:
    return ContractVM(contract, instr).run_sequence(sequence)


def path_id(results: Sequence[ExecResult], scope: PathScope = PathScope.LAST_TX) -> str:
    """
    Digest the branch behaviour of an executed sequence.

    Args:
        results: executions in sequence order
        scope: LAST_TX digests only the final transaction, WHOLE_SEQUENCE all of them

    Returns:
        Hex digest, stable across runs and platforms
    """
    if not results:
        raise ValueError("path_id needs at least one execution")
    chosen: Iterable[ExecResult] = results[-1:] if scope is PathScope.LAST_TX else results
    hasher = hashlib.blake2b(digest_size=16)
    hasher.update(json.dumps([r.path_signature() for r in chosen]).encode("utf-8"))
    return hasher.hexdigest()
