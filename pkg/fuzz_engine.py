"""
Fuzz Engine Module
Greybox fuzzing loop with input prediction.

The outer loop picks a corpus entry and grants it energy; the inner loop
mutates the entry and, after each run, may predict an input that drives a
cost metric to zero. A pending prediction is always executed, even after
the entry's energy has run out.
"""

from __future__ import annotations

import logging
import random
import threading
import time
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Set

from bug_oracles import BugFinding, BugOracle, Witness
from campaign_config import CampaignConfig
from case_executor import CaseExecutor, Execution
from contract_parser import Contract, SourceLoc
from contract_vm import Instrumentation, Transaction
from cost_metrics import CostVector, MetricId
from fuzz_case import Mode, TestCase
from input_mutator import InputMutator
from input_predictor import DataPoint, InputPredictor, Prediction, PredictionGoal
from sequence_fuzzer import Mutation, SequenceFuzzer, classify_scalar
from stats_stream import CampaignSummary, EventKind, StatsEvent, StatsRecorder, summarize

logger = logging.getLogger(__name__)


@dataclass
class CorpusEntry:
    pid: str
    test: TestCase
    cost_vector: CostVector
    times_selected: int = 0
    path_frequency: int = 1
    admitted_at: int = 0


class Corpus:
    """Path id -> entry; one entry per pid, admission-time cost vector kept."""

    def __init__(self):
        self._entries: Dict[str, CorpusEntry] = {}

    def __contains__(self, pid: object) -> bool:
        return pid in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, pid: str) -> Optional[CorpusEntry]:
        return self._entries.get(pid)

    def add(self, entry: CorpusEntry):
        if entry.pid in self._entries:
            raise ValueError(f"pid {entry.pid} already in corpus")
        self._entries[entry.pid] = entry

    def entries(self) -> List[CorpusEntry]:
        return list(self._entries.values())


@dataclass
class ExecutionRecord:
    """What the observer callback sees after every execution."""

    exec_index: int
    test: TestCase
    pid: str
    cost_vector: CostVector
    new_path: bool
    predicted: bool
    energy: int
    prediction: Optional[Prediction] = None


@dataclass
class CampaignResult:
    contract_name: str
    config: CampaignConfig
    attack_slot: int
    executions: int
    corpus: Corpus
    findings: List[BugFinding]
    events: List[StatsEvent]
    elapsed_seconds: float = 0.0

    @property
    def summary(self) -> CampaignSummary:
        return summarize(self.events)


@dataclass
class _Anchor:
    """The input the inner loop currently mutates, with its cost vector and pid."""

    test: TestCase
    cost: CostVector
    pid: str


@dataclass
class _Pending:
    test: TestCase
    goal: PredictionGoal


class GreyboxFuzzer:
    """
    One fuzzing campaign on one contract.

    All randomness comes from a single generator seeded with the campaign
    seed, so a campaign bounded by executions is fully reproducible.
    """

    def __init__(
        self,
        contract: Contract,
        config: CampaignConfig,
        recorder: Optional[StatsRecorder] = None,
        on_execution: Optional[Callable[[ExecutionRecord], None]] = None,
        stop_event: Optional[threading.Event] = None,
    ):
        """
        Args:
            contract: parsed contract under test
            config: campaign configuration (resolved here)
            recorder: event sink; a private one is created when omitted
            on_execution: called after every execution
            stop_event: set from another thread to interrupt the campaign
        """
        self.contract = contract
        self.config = config.resolved()
        self.rng = random.Random(self.config.rng_seed)
        self.attack_slot = self.config.choose_attack_slot(contract, self.rng)
        instr = Instrumentation(
            attack_slot=self.attack_slot,
            merge_policy=self.config.merge_policy,
            step_budget=self.config.step_budget,
        )
        self.executor = CaseExecutor(contract, instr, self.config.path_scope)
        self.mutator = InputMutator(self.rng, contract.literals, self.config.harvest_literals)
        self.predictor = InputPredictor(self.rng, self.config.secant_iterations)
        self.sequences = SequenceFuzzer(
            contract,
            self.executor,
            self.mutator,
            self.rng,
            max_sequence_length=self.config.max_sequence_length,
            unconditional=self.config.unconditional_sequences,
            emit=lambda kind, payload: self._emit(EventKind(kind), payload),
        )
        self.oracle = BugOracle(self.attack_slot, self.config.step_budget_is_bug)
        self.corpus = Corpus()
        self.recorder = recorder or StatsRecorder()
        self.on_execution = on_execution
        self.stop_event = stop_event or threading.Event()
        self.executions = 0
        self._covered: Set[SourceLoc] = set()
        self._started = time.monotonic()
        self._aggressive_enabled = self.config.aggressive_probability > 0 and bool(self.executor.vm.overridable_slots())

    # --- bookkeeping ---

    def _elapsed(self) -> float:
        return time.monotonic() - self._started

    def _emit(self, kind: EventKind, payload: Dict) -> StatsEvent:
        wall = int(self._elapsed() * 1000) if self.config.record_wall_time else None
        return self.recorder.emit(kind, self.executions, payload, wall)

    def interrupted(self) -> bool:
        if self.stop_event.is_set():
            return True
        if self.config.max_executions is not None and self.executions >= self.config.max_executions:
            return True
        return self.config.max_seconds is not None and self._elapsed() >= self.config.max_seconds

    def default_seeds(self) -> List[TestCase]:
        """One single-call test per public function: all-zero arguments, sender 0."""
        return [TestCase.single(Transaction(fn.name, (0,) * fn.arity, 0)) for fn in self.contract.public_functions]

    # --- execution ---

    def _execute(self, test: TestCase) -> tuple:
        """Run a test, feed oracles and corpus; returns (execution, new_path)."""
        self.executions += 1
        if test.mode is Mode.AGGRESSIVE:
            execution, _ = self.sequences.aggressive_fuzz(test, self.corpus.__contains__)
            return execution, False

        execution = self.executor.run(test)
        self._track_coverage(execution)
        new_path = False
        entry = self.corpus.get(execution.pid)
        if entry is not None:
            entry.path_frequency += 1
        else:
            new_path = True
            self._admit(execution)
        self.sequences.update_store_demand(execution)
        self._check_bugs(execution)
        return execution, new_path

    def _admit(self, execution: Execution):
        test = execution.test
        self.corpus.add(CorpusEntry(execution.pid, test, execution.cost_vector, admitted_at=self.executions))
        result = execution.focus_result
        self._emit(
            EventKind.NEW_PATH,
            {
                "pid": execution.pid,
                "function": test.focus.function,
                "sequence": [str(tx) for tx in test.sequence],
                "termination": str(result.termination),
            },
        )
        logger.debug("new path %s via %s", execution.pid, test)
        self.sequences.admit_to_pools(execution)
        self.sequences.update_demand(test.focus.function, execution.pid)

    def _track_coverage(self, execution: Execution):
        before = len(self._covered)
        for result in execution.results:
            self._covered.update(result.executed_locs)
        if len(self._covered) > before:
            self._emit(EventKind.COVERAGE, {"new": len(self._covered) - before, "total": len(self._covered)})

    def _check_bugs(self, execution: Execution):
        for finding in self.oracle.check_all(execution.results):
            if not self.oracle.dedup(finding):
                continue
            finding.witness = Witness(execution.test.sequence, self.config.rng_seed, self.executions, self.attack_slot)
            finding.time_to_bug_execs = self.executions
            finding.time_to_bug_seconds = self._elapsed()
            logger.info("found %s at %s after %d executions", finding.kind.value, finding.loc, self.executions)
            self._emit(EventKind.BUG, finding.to_dict(include_wall_time=self.config.record_wall_time))

    # --- algorithm steps ---

    def run_seeds(self, seeds: Optional[Iterable[TestCase]] = None) -> Corpus:
        """Execute the seeds; each distinct pid becomes a corpus entry."""
        self.executor.deploy()
        for test in seeds if seeds is not None else self.default_seeds():
            if self.interrupted():
                break
            execution, new_path = self._execute(test)
            self._notify(execution, new_path, predicted=False, energy=0, prediction=None)
        return self.corpus

    def pick_input(self) -> CorpusEntry:
        """Sample an entry with weight 1 / (1 + pathFrequency)."""
        entries = self.corpus.entries()
        weights = [1.0 / (1 + entry.path_frequency) for entry in entries]
        entry = self.rng.choices(entries, weights=weights)[0]
        entry.times_selected += 1
        return entry

    def assign_energy(self, entry: CorpusEntry) -> int:
        energy = self.config.energy_base * (2 ** entry.times_selected) // max(1, entry.path_frequency)
        return max(1, min(energy, self.config.energy_cap))

    def use_aggressive(self) -> bool:
        return self._aggressive_enabled and self.rng.random() < self.config.aggressive_probability

    def fuzz_input(self, base: TestCase) -> Mutation:
        """Mutate the inner loop's current input (regular or aggressive)."""
        if base.mode is Mode.AGGRESSIVE:
            mutated, ref = self.mutator.fuzz_input(base)
            return Mutation(mutated, classify_scalar(base, ref), ref)
        return self.sequences.mutate_sequence(base)

    def fuzz_loop(self, seeds: Optional[Iterable[TestCase]] = None) -> CampaignResult:
        """
        Run the campaign until its budget is exhausted.

        Returns:
            CampaignResult with corpus, findings and the event stream
        """
        self._started = time.monotonic()
        if not len(self.corpus):
            self.run_seeds(seeds)
        if not len(self.corpus):
            logger.warning("%s has no public functions; nothing to fuzz", self.contract.name)
        while len(self.corpus) and not self.interrupted():
            self._fuzz_entry(self.pick_input())
        self._emit(
            EventKind.CAMPAIGN_END,
            {"executions": self.executions, "corpusSize": len(self.corpus), "bugs": len(self.oracle.findings)},
        )
        return CampaignResult(
            contract_name=self.contract.name,
            config=self.config,
            attack_slot=self.attack_slot,
            executions=self.executions,
            corpus=self.corpus,
            findings=list(self.oracle.findings),
            events=list(self.recorder.events),
            elapsed_seconds=self._elapsed(),
        )

    run = fuzz_loop

    def _fuzz_entry(self, entry: CorpusEntry):
        energy = 0
        max_energy = self.assign_energy(entry)
        anchor = _Anchor(entry.test, entry.cost_vector, entry.pid)
        aggressive_anchor: Optional[_Anchor] = None
        pending: Optional[_Pending] = None

        while energy < max_energy or pending is not None:
            if self.interrupted():
                return
            goal: Optional[PredictionGoal] = None
            if pending is not None:
                mutant, goal = pending.test, pending.goal
                pending = None
                kind = classify_scalar(goal.base, goal.scalar)
            else:
                if self.use_aggressive():
                    if aggressive_anchor is None:
                        aggressive_anchor = _Anchor(self.executor.aggressive_view(anchor.test), anchor.cost, anchor.pid)
                    base = aggressive_anchor
                else:
                    base = anchor
                mutation = self.fuzz_input(base.test)
                mutant, kind = mutation.test, mutation.kind

            execution, new_path = self._execute(mutant)
            if goal is not None:
                self._emit(
                    EventKind.PREDICTION_ATTEMPT,
                    {"step": goal.step, "metric": str(goal.metric), "scalar": str(goal.scalar), "value": mutant.get(goal.scalar)},
                )
                pending = self._continue_goal(goal, execution)

            current = aggressive_anchor if mutant.mode is Mode.AGGRESSIVE else anchor
            # A goal that ran out keeps its metric; config C gets exactly one step per metric.
            if (
                pending is None
                and energy < max_energy
                and self.config.prediction
                and kind.predictable
                and current is not None
                and mutant != current.test
            ):
                pending = self._predict(current, execution, exclude=None if goal is None else goal.metric)

            self._notify(
                execution,
                new_path,
                predicted=goal is not None,
                energy=energy,
                prediction=None if pending is None else Prediction(pending.goal.scalar, pending.test.get(pending.goal.scalar), pending.goal.metric),
            )

            # A setup change that keeps the focus on the same path becomes the new starting point.
            if current is not None and kind.changes_setup and execution.pid == current.pid and mutant != current.test:
                rebased = _Anchor(mutant, execution.cost_vector, execution.pid)
                if mutant.mode is Mode.AGGRESSIVE:
                    aggressive_anchor = rebased
                else:
                    anchor = rebased
                    aggressive_anchor = None
            energy += 1

    def _predict(self, current: _Anchor, execution: Execution, exclude: Optional[MetricId] = None) -> Optional[_Pending]:
        prediction = self.predictor.predict(current.test, current.cost, execution.test, execution.cost_vector, exclude)
        if prediction is None:
            return None
        goal = self.predictor.start_goal(prediction, current.test, current.cost, execution.test, execution.cost_vector)
        return _Pending(goal.candidate(prediction.value), goal)

    def _continue_goal(self, goal: PredictionGoal, execution: Execution) -> Optional[_Pending]:
        cost = execution.cost_vector.get(goal.metric)
        if cost == 0:
            self._emit(EventKind.PREDICTION_SUCCESS, {"step": goal.step, "metric": str(goal.metric), "scalar": str(goal.scalar)})
            return None
        if cost is None:
            return None
        advanced = self.predictor.advance_goal(goal, DataPoint(execution.test.get(goal.scalar), cost))
        if advanced is None:
            return None
        value, next_goal = advanced
        return _Pending(next_goal.candidate(value), next_goal)

    def _notify(self, execution: Execution, new_path: bool, predicted: bool, energy: int, prediction: Optional[Prediction]):
        if self.on_execution is None:
            return
        self.on_execution(
            ExecutionRecord(
                exec_index=self.executions,
                test=execution.test,
                pid=execution.pid,
                cost_vector=execution.cost_vector,
                new_path=new_path,
                predicted=predicted,
                energy=energy,
                prediction=prediction,
            )
        )


def run_campaign(contract: Contract, config: CampaignConfig, recorder: Optional[StatsRecorder] = None) -> CampaignResult:
    """Convenience wrapper: seed, fuzz until the budget is spent, return the result."""
    return GreyboxFuzzer(contract, config, recorder).fuzz_loop()
