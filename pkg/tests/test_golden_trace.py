"""
Walkthrough of the baz example with every random choice scripted: which
entry is picked, which scalar is mutated to what, and which eligible
metric the predictor uses.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Tuple

import pytest

from campaign_config import CampaignConfig, Configuration
from conftest import find_loc
from contract_vm import Transaction
from cost_metrics import MetricId, MetricKind
from fuzz_case import ScalarRef, TestCase
from fuzz_engine import CorpusEntry, ExecutionRecord, GreyboxFuzzer
from sequence_fuzzer import Mutation, MutationKind

A, B, C = 0, 1, 2


def _case(a: int, b: int, c: int) -> TestCase:
    return TestCase.single(Transaction("baz", (a, b, c)))


class ScriptedFuzzer(GreyboxFuzzer):
    def __init__(self, contract, picks: List[TestCase], mutations: List[Tuple[int, int]], metrics: List[MetricId], **kwargs):
        super().__init__(contract, CampaignConfig(Configuration.B, max_executions=8), **kwargs)
        self._picks = list(picks)
        self._mutations = list(mutations)
        self._metrics = list(metrics)
        self.eligible_seen: List[List[MetricId]] = []
        self.predictor.choose_metric = self._choose_metric

    def pick_input(self) -> CorpusEntry:
        wanted = self._picks.pop(0)
        (entry,) = [entry for entry in self.corpus.entries() if entry.test == wanted]
        entry.times_selected += 1
        return entry

    def assign_energy(self, entry: CorpusEntry) -> int:
        return 2

    def fuzz_input(self, base: TestCase) -> Mutation:
        index, value = self._mutations.pop(0)
        ref = ScalarRef.arg(0, index)
        return Mutation(base.with_value(ref, value), MutationKind.ARG, ref)

    def _choose_metric(self, eligible: List[MetricId]) -> MetricId:
        self.eligible_seen.append(list(eligible))
        if not self._metrics:
            return eligible[0]
        chosen = self._metrics.pop(0)
        assert chosen in eligible
        return chosen


@pytest.fixture
def metrics(baz) -> Dict[str, MetricId]:
    named = {}
    for false_name, true_name, needle in (("C4", "C5", "d < 1"), ("C7", "C8", "b < 3"), ("C12", "C13", "a == 42"), ("C19", "C20", "c < 42")):
        loc = find_loc(baz, needle)
        named[false_name] = MetricId(loc, MetricKind.FLIP_TO_FALSE)
        named[true_name] = MetricId(loc, MetricKind.FLIP_TO_TRUE)
    return named


@pytest.fixture
def trace(baz, metrics):
    records: List[ExecutionRecord] = []
    fuzzer = ScriptedFuzzer(
        baz,
        picks=[_case(-1, 0, -5), _case(-1, 3, -5), _case(-1, 6, -5)],
        mutations=[(B, -3), (A, 7), (C, 0)],
        metrics=[metrics["C7"], metrics["C4"], metrics["C13"], metrics["C19"]],
        on_execution=records.append,
    )
    result = fuzzer.fuzz_loop(seeds=[_case(-1, 0, -5)])
    return fuzzer, result, records


def _named(metrics: Dict[str, MetricId], costs) -> Dict[str, int]:
    names = {metric: name for name, metric in metrics.items()}
    return {names[metric]: cost for metric, cost in costs.nonzero().items()}


def test_inputs_follow_the_walkthrough(trace) -> None:
    _, result, records = trace
    assert result.executions == 8
    assert [record.test.focus.args for record in records] == [
        (-1, 0, -5),
        (-1, -3, -5),
        (-1, 3, -5),
        (-1, 6, -5),
        (7, 3, -5),
        (42, 3, -5),
        (-1, 6, 0),
        (-1, 6, 42),
    ]


def test_cost_vectors_match_the_walkthrough(trace, metrics) -> None:
    _, _, records = trace
    assert [_named(metrics, record.cost_vector) for record in records] == [
        {"C4": 6, "C7": 3},
        {"C4": 9, "C7": 6},
        {"C4": 3, "C8": 1, "C13": 43},
        {"C5": 1, "C19": 47},
        {"C4": 3, "C8": 1, "C13": 35},
        {"C4": 3, "C8": 1, "C12": 1},
        {"C5": 6, "C19": 42},
        {"C5": 48, "C20": 1},
    ]


def test_predictions_match_the_walkthrough(trace, metrics) -> None:
    _, _, records = trace
    predicted: List[Optional[Tuple[str, int]]] = []
    names = {metric: name for name, metric in metrics.items()}
    for record in records[1:7]:
        if record.prediction is None:
            predicted.append(None)
        else:
            predicted.append((names[record.prediction.metric], record.prediction.value))
    assert predicted == [("C7", 3), ("C4", 6), None, ("C13", 42), None, ("C19", 42)]
    assert [record.predicted for record in records] == [False, False, True, True, False, True, False, True]


def test_eligible_metrics_at_each_prediction(trace, metrics) -> None:
    fuzzer, _, _ = trace
    assert fuzzer.eligible_seen[:4] == [
        sorted([metrics["C4"], metrics["C7"]]),
        [metrics["C4"]],
        [metrics["C13"]],
        sorted([metrics["C5"], metrics["C19"]]),
    ]


def test_paths_are_discovered_in_order(trace) -> None:
    _, result, records = trace
    assert [record.new_path for record in records] == [True, False, True, True, False, True, False, True]
    assert len(result.corpus) == 5
    returns = {entry.test.focus.args: entry for entry in result.corpus.entries()}
    assert set(returns) == {(-1, 0, -5), (-1, 3, -5), (-1, 6, -5), (42, 3, -5), (-1, 6, 42)}


def test_every_prediction_hits_in_one_step(trace) -> None:
    _, result, _ = trace
    summary = result.summary
    assert summary.one_shot_attempts == 4
    assert summary.one_shot_successes == 4
    assert summary.paths == 5
