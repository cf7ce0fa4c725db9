from __future__ import annotations

import random
import statistics
import threading
from typing import List

import pytest

from benchmark_corpus import WALLET_ATTACK_SLOT, linear_corpus
from bug_oracles import BugKind
from campaign_config import CampaignConfig, Configuration
from contract_parser import parse_contract
from contract_vm import Transaction
from fuzz_case import Mode, TestCase
from fuzz_engine import CorpusEntry, ExecutionRecord, GreyboxFuzzer, _Anchor, run_campaign
from input_predictor import PredictionError
from sequence_fuzzer import MutationKind
from stats_stream import EventKind
from witness import WitnessRecord, replay


def _config(configuration: Configuration, seed: int = 0, execs: int = 2_000, **kwargs) -> CampaignConfig:
    return CampaignConfig(configuration=configuration, rng_seed=seed, max_executions=execs, **kwargs)


def _first_bug_execs(result, kind: BugKind, budget: int) -> int:
    hits = [f.time_to_bug_execs for f in result.findings if f.kind is kind]
    return min(hits) if hits else budget + 1


# --- seeding, selection and energy ---


def test_default_seeds_give_one_entry_per_function(foo) -> None:
    fuzzer = GreyboxFuzzer(foo, _config(Configuration.B))
    corpus = fuzzer.run_seeds()
    assert len(corpus) == 4
    assert sorted(entry.test.focus.function for entry in corpus.entries()) == ["Bar", "CopyY", "IncX", "SetY"]
    assert all(entry.test.focus.args == (0,) * foo.functions[entry.test.focus.function].arity for entry in corpus.entries())


def test_duplicate_seeds_make_one_entry(baz) -> None:
    fuzzer = GreyboxFuzzer(baz, _config(Configuration.B))
    seed = TestCase.single(Transaction("baz", (0, 0, 0)))
    corpus = fuzzer.run_seeds([seed, seed, seed])
    assert len(corpus) == 1
    assert corpus.entries()[0].path_frequency == 3


def test_seeding_pools_only_state_changing_calls(foo) -> None:
    fuzzer = GreyboxFuzzer(foo, _config(Configuration.B))
    fuzzer.run_seeds()
    # SetY(0) and CopyY() leave the all-zero state Bar() already put in the pool.
    assert fuzzer.sequences.pools.transactions() == [Transaction("Bar"), Transaction("IncX")]


def test_prediction_refuses_pairs_that_differ_in_two_scalars(baz) -> None:
    fuzzer = GreyboxFuzzer(baz, _config(Configuration.B))
    fuzzer.run_seeds([TestCase.single(Transaction("baz", (0, 0, 0)))])
    (entry,) = fuzzer.corpus.entries()
    execution = fuzzer.executor.run(TestCase.single(Transaction("baz", (1, 1, 0))))
    with pytest.raises(PredictionError):
        fuzzer._predict(_Anchor(entry.test, entry.cost_vector, entry.pid), execution)


def test_pick_input_prefers_rare_paths(baz) -> None:
    fuzzer = GreyboxFuzzer(baz, _config(Configuration.B))
    fuzzer.run_seeds([TestCase.single(Transaction("baz", (0, 0, 0))), TestCase.single(Transaction("baz", (0, 5, 0)))])
    rare, hot = fuzzer.corpus.entries()
    rare.path_frequency, hot.path_frequency = 0, 99
    counts = {id(rare): 0, id(hot): 0}
    for _ in range(100_000):
        counts[id(fuzzer.pick_input())] += 1
    ratio = counts[id(rare)] / counts[id(hot)]
    assert 80 <= ratio <= 120
    assert rare.times_selected + hot.times_selected == 100_000


def test_pick_input_is_reproducible(baz) -> None:
    picks = []
    for _ in range(2):
        fuzzer = GreyboxFuzzer(baz, _config(Configuration.B, seed=3))
        fuzzer.run_seeds([TestCase.single(Transaction("baz", (0, b, 0))) for b in (0, 5, 50)])
        picks.append([fuzzer.pick_input().test for _ in range(50)])
    assert picks[0] == picks[1]


@pytest.mark.parametrize(
    "times_selected, frequency, energy",
    [(1, 1, 16), (1, 512, 1), (20, 1, 1024), (0, 1, 8), (3, 4, 16)],
)
def test_assign_energy(baz, times_selected: int, frequency: int, energy: int) -> None:
    fuzzer = GreyboxFuzzer(baz, _config(Configuration.B))
    entry = CorpusEntry("pid", TestCase.single(Transaction("baz", (0, 0, 0))), None, times_selected, frequency)
    assert fuzzer.assign_energy(entry) == energy


def test_aggressive_inputs_mutate_overrides_or_senders(foo) -> None:
    fuzzer = GreyboxFuzzer(foo, _config(Configuration.B))
    view = fuzzer.executor.aggressive_view(TestCase.single(Transaction("Bar")))
    kinds = {fuzzer.fuzz_input(view).kind for _ in range(100)}
    assert kinds == {MutationKind.OVERRIDE, MutationKind.SENDER}


# --- whole campaigns ---


def test_campaigns_are_deterministic(foo, wallet) -> None:
    for contract in (foo, wallet):
        for seed in range(2):
            streams = [
                [event.to_json() for event in run_campaign(contract, _config(Configuration.B, seed=seed, execs=1_500)).events]
                for _ in range(2)
            ]
            assert streams[0] == streams[1]


def test_event_stream_is_monotone(wallet) -> None:
    result = run_campaign(wallet, _config(Configuration.B, seed=4, execs=2_000, attack_slot=WALLET_ATTACK_SLOT))
    events = result.events
    assert [event.seq for event in events] == list(range(len(events)))
    assert all(a.exec_index <= b.exec_index for a, b in zip(events, events[1:]))
    new_paths = [event.exec_index for event in events if event.kind is EventKind.NEW_PATH]
    assert new_paths == sorted(set(new_paths))
    totals = [event.payload["total"] for event in events if event.kind is EventKind.COVERAGE]
    assert totals == sorted(totals)
    assert events[-1].kind is EventKind.CAMPAIGN_END
    assert events[-1].payload["executions"] == result.executions == 2_000
    assert all(event.wall_millis is None for event in events)


def test_wall_clock_is_opt_in(baz) -> None:
    result = run_campaign(baz, _config(Configuration.A, execs=50, record_wall_time=True))
    assert all(event.wall_millis is not None for event in result.events)


def test_corpus_entries_reproduce_their_paths(foo, wallet) -> None:
    for contract in (foo, wallet):
        fuzzer = GreyboxFuzzer(contract, _config(Configuration.B, seed=2, execs=3_000))
        result = fuzzer.fuzz_loop()
        for entry in result.corpus.entries():
            assert fuzzer.executor.run(entry.test).pid == entry.pid
            assert entry.test.mode is Mode.REGULAR


def test_pending_predictions_run_before_the_next_pick(baz) -> None:
    records: List[ExecutionRecord] = []
    fuzzer = GreyboxFuzzer(baz, _config(Configuration.B, seed=6, execs=3_000), on_execution=records.append)
    fuzzer.fuzz_loop()
    for before, after in zip(records, records[1:]):
        if before.prediction is not None:
            assert after.predicted
            assert after.test.get(before.prediction.scalar) == before.prediction.value


def test_baz_full_coverage_needs_prediction(baz) -> None:
    budget = 20_000
    for seed in range(3):
        with_prediction = run_campaign(baz, _config(Configuration.B, seed=seed, execs=budget, harvest_literals=False))
        without = run_campaign(baz, _config(Configuration.A, seed=seed, execs=budget, harvest_literals=False))
        assert len(with_prediction.corpus) == 5
        assert len(without.corpus) <= 4
        returns = {entry.test.focus.args[0] for entry in without.corpus.entries()}
        assert 42 not in returns


def test_config_a_never_predicts(baz) -> None:
    result = run_campaign(baz, _config(Configuration.A, execs=3_000))
    kinds = {event.kind for event in result.events}
    assert EventKind.PREDICTION_ATTEMPT not in kinds


def test_foo_without_aggressive_mode_never_grows_sequences(foo) -> None:
    records: List[ExecutionRecord] = []
    fuzzer = GreyboxFuzzer(foo, _config(Configuration.B, seed=3, execs=5_000, aggressive_probability=0.0), on_execution=records.append)
    result = fuzzer.fuzz_loop()
    assert max(len(record.test.sequence) for record in records) == 1
    assert result.findings == []
    assert EventKind.DEMAND_FLAG_SET not in {event.kind for event in result.events}


def test_foo_aggressive_mode_raises_demand_for_bar(foo) -> None:
    result = run_campaign(foo, _config(Configuration.B, seed=5, execs=20_000))
    flagged = [event.payload["function"] for event in result.events if event.kind is EventKind.DEMAND_FLAG_SET]
    assert "Bar" in flagged
    for finding in result.findings:
        assert finding.kind is BugKind.ASSERT_VIOLATION
        assert len(finding.witness.sequence) >= 3
        assert replay(WitnessRecord.from_finding(finding, foo, result.config)).reproduced


def test_config_d_keeps_prefix_variants_apart(foo) -> None:
    budget = 5_000
    corpus_d = run_campaign(foo, _config(Configuration.D, seed=1, execs=budget)).corpus
    corpus_a = run_campaign(foo, _config(Configuration.A, seed=1, execs=budget)).corpus
    assert len(corpus_d) >= 2 * len(corpus_a)
    assert max(len(entry.test.sequence) for entry in corpus_d.entries()) > 1
    assert EventKind.DEMAND_FLAG_SET not in {event.kind for event in run_campaign(foo, _config(Configuration.D, execs=500)).events}


def test_one_shot_prediction_on_linear_contracts() -> None:
    attempts = successes = 0
    for contract in linear_corpus().values():
        summary = run_campaign(contract, _config(Configuration.B, seed=0, execs=1_500)).summary
        attempts += summary.one_shot_attempts
        successes += summary.one_shot_successes
    assert attempts > 0
    assert successes / attempts >= 0.9


def test_nonlinear_root_needs_iteration(nonlinear) -> None:
    budget = 3_000
    iterative = [_first_bug_execs(run_campaign(nonlinear, _config(Configuration.B, seed=s, execs=budget)), BugKind.ASSERT_VIOLATION, budget) for s in range(3)]
    single = [_first_bug_execs(run_campaign(nonlinear, _config(Configuration.C, seed=s, execs=budget)), BugKind.ASSERT_VIOLATION, budget) for s in range(3)]
    assert statistics.median(iterative) < statistics.median(single)


def _chained_predictions(records: List[ExecutionRecord]) -> int:
    """Predicted runs that go on to predict the metric their own goal aimed at."""
    chained = 0
    for before, during in zip(records, records[1:]):
        if before.prediction is not None and during.prediction is not None and during.prediction.metric == before.prediction.metric:
            chained += 1
    return chained


def test_single_step_config_never_chains_predictions(nonlinear) -> None:
    for configuration, chains in ((Configuration.C, False), (Configuration.B, True)):
        records: List[ExecutionRecord] = []
        GreyboxFuzzer(nonlinear, _config(configuration, seed=1, execs=3_000), on_execution=records.append).fuzz_loop()
        assert (_chained_predictions(records) > 0) is chains


def test_contract_with_an_empty_function() -> None:
    contract = parse_contract("contract E {\n  fn f() {\n  }\n}\n")
    result = run_campaign(contract, _config(Configuration.B, execs=200))
    assert len(result.corpus) == 1
    assert result.findings == []
    assert result.executions == 200


def test_contract_without_functions_ends_immediately() -> None:
    result = run_campaign(parse_contract("contract E { }"), _config(Configuration.B, execs=200))
    assert result.executions == 0
    assert result.events[-1].kind is EventKind.CAMPAIGN_END


def test_stop_event_interrupts_the_campaign(baz) -> None:
    stop = threading.Event()
    seen: List[int] = []

    def observe(record: ExecutionRecord) -> None:
        seen.append(record.exec_index)
        if record.exec_index == 100:
            stop.set()

    result = GreyboxFuzzer(baz, _config(Configuration.B, execs=10_000), on_execution=observe, stop_event=stop).fuzz_loop()
    assert result.executions == 100


def test_attack_slot_avoids_the_static_layout(wallet) -> None:
    for seed in range(20):
        fuzzer = GreyboxFuzzer(wallet, _config(Configuration.B, seed=seed))
        assert fuzzer.attack_slot not in wallet.static_slots()
    assert GreyboxFuzzer(wallet, _config(Configuration.B, attack_slot=WALLET_ATTACK_SLOT)).attack_slot == WALLET_ATTACK_SLOT


# --- full-size acceptance campaigns ---


@pytest.mark.slow
def test_baz_acceptance(baz) -> None:
    covered = [len(run_campaign(baz, _config(Configuration.B, seed=s, execs=50_000, harvest_literals=False)).corpus) for s in range(20)]
    assert covered == [5] * 20
    partial = [len(run_campaign(baz, _config(Configuration.A, seed=s, execs=100_000, harvest_literals=False)).corpus) for s in range(20)]
    assert sum(1 for paths in partial if paths <= 4) >= 18


@pytest.mark.slow
def test_foo_acceptance(foo) -> None:
    budget = 200_000
    found = 0
    for seed in range(20):
        result = run_campaign(foo, _config(Configuration.B, seed=seed, execs=budget))
        bugs = [f for f in result.findings if f.kind is BugKind.ASSERT_VIOLATION]
        if bugs and len(bugs[0].witness.sequence) >= 3:
            found += 1
    assert found >= 18


@pytest.mark.slow
def test_wallet_acceptance(wallet) -> None:
    budget = 500_000
    hits_b = hits_a = 0
    for seed in range(20):
        config_b = _config(Configuration.B, seed=seed, execs=budget, attack_slot=WALLET_ATTACK_SLOT)
        config_a = _config(Configuration.A, seed=seed, execs=budget, attack_slot=WALLET_ATTACK_SLOT)
        hits_b += _first_bug_execs(run_campaign(wallet, config_b), BugKind.ARBITRARY_WRITE, budget) <= budget
        hits_a += _first_bug_execs(run_campaign(wallet, config_a), BugKind.ARBITRARY_WRITE, budget) <= budget
    assert hits_b >= 16
    assert hits_a <= 2


@pytest.mark.slow
def test_nonlinear_acceptance(nonlinear) -> None:
    budget = 50_000
    iterative = [_first_bug_execs(run_campaign(nonlinear, _config(Configuration.B, seed=s, execs=budget)), BugKind.ASSERT_VIOLATION, budget) for s in range(20)]
    single = [_first_bug_execs(run_campaign(nonlinear, _config(Configuration.C, seed=s, execs=budget)), BugKind.ASSERT_VIOLATION, budget) for s in range(20)]
    assert statistics.median(iterative) < statistics.median(single)


@pytest.mark.slow
def test_determinism_acceptance(foo) -> None:
    for seed in range(5):
        first = [e.to_json() for e in run_campaign(foo, _config(Configuration.B, seed=seed, execs=20_000)).events]
        second = [e.to_json() for e in run_campaign(foo, _config(Configuration.B, seed=seed, execs=20_000)).events]
        assert first == second


def test_random_module_state_is_not_used(baz) -> None:
    random.seed(1)
    first = [e.to_json() for e in run_campaign(baz, _config(Configuration.B, execs=500)).events]
    random.seed(2)
    second = [e.to_json() for e in run_campaign(baz, _config(Configuration.B, execs=500)).events]
    assert first == second
