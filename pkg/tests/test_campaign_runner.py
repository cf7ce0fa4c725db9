from __future__ import annotations

import threading
from typing import List

import pytest

from benchmark_corpus import load_benchmark_source
from campaign_config import CampaignConfig, Configuration
from campaign_runner import CampaignOutcome, CampaignWorker, MultiCampaignRunner
from fuzz_engine import run_campaign
from host_info import HostInfo, HostInspector
from stats_stream import EventKind, StatsEvent


def test_worker_streams_events_and_finishes(baz) -> None:
    heard: List[StatsEvent] = []
    worker = CampaignWorker(baz, CampaignConfig(Configuration.B, max_executions=500), heard.append)
    worker.start()
    worker.join(timeout=60)
    assert not worker.is_running()
    assert worker.error is None
    assert worker.result.executions == 500
    assert heard == worker.result.events
    assert heard[-1].kind is EventKind.CAMPAIGN_END


def test_worker_stops_on_request(baz) -> None:
    started = threading.Event()

    def on_event(event: StatsEvent) -> None:
        started.set()

    worker = CampaignWorker(baz, CampaignConfig(Configuration.B, max_executions=None, max_seconds=120.0), on_event)
    worker.start()
    assert started.wait(timeout=30)
    worker.stop(timeout=30)
    assert not worker.is_running()
    assert worker.result is not None
    assert worker.result.events[-1].kind is EventKind.CAMPAIGN_END


def test_worker_reports_failures(baz) -> None:
    worker = CampaignWorker(baz, CampaignConfig(max_executions=None))
    worker.start()
    worker.join(timeout=30)
    assert isinstance(worker.error, ValueError)
    assert worker.result is None


def test_sequential_runner_matches_single_campaigns(baz) -> None:
    config = CampaignConfig(Configuration.B, max_executions=400)
    outcomes = MultiCampaignRunner(load_benchmark_source("baz"), config, [3, 4], jobs=1).run()
    assert [outcome.seed for outcome in outcomes] == [3, 4]
    for outcome in outcomes:
        expected = run_campaign(baz, CampaignConfig(Configuration.B, rng_seed=outcome.seed, max_executions=400))
        assert outcome.error is None
        assert outcome.events == expected.events
        assert outcome.summary == expected.summary


def test_runner_reports_broken_sources() -> None:
    (outcome,) = MultiCampaignRunner("contract {", CampaignConfig(max_executions=10), [0], jobs=1).run()
    assert outcome.error.startswith("ContractSyntaxError")
    assert outcome == CampaignOutcome(0, error=outcome.error)


@pytest.mark.parametrize(
    "requested, campaigns, workers",
    [(0, None, 8), (0, 3, 3), (2, None, 2), (64, None, 8), (4, 20, 4), (0, 0, 1)],
)
def test_worker_count(monkeypatch, requested: int, campaigns, workers: int) -> None:
    monkeypatch.setattr(HostInspector, "cpu_count", staticmethod(lambda: 8))
    assert HostInspector.worker_count(requested, campaigns) == workers


def test_host_snapshot() -> None:
    info = HostInspector.snapshot()
    assert isinstance(info, HostInfo)
    assert info.logical_cpus >= 1
    assert 0 < info.available_memory <= info.total_memory
    assert info.process_rss == info.to_dict()["processRss"] > 0
    assert "CPUs" in str(info)
