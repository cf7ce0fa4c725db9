"""
Campaign Runner Module
Runs fuzzing campaigns in a background thread, or several independent
campaigns in parallel worker processes.
"""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence

from bug_oracles import BugFinding
from campaign_config import CampaignConfig
from contract_parser import Contract, parse_contract
from fuzz_engine import CampaignResult, GreyboxFuzzer
from host_info import HostInspector
from stats_stream import CampaignSummary, StatsEvent, StatsRecorder, summarize

logger = logging.getLogger(__name__)


@dataclass
class CampaignOutcome:
    """What a finished campaign sends back to the coordinating process."""

    seed: int
    events: List[StatsEvent] = field(default_factory=list)
    findings: List[BugFinding] = field(default_factory=list)
    executions: int = 0
    error: Optional[str] = None

    @property
    def summary(self) -> CampaignSummary:
        return summarize(self.events)

    @classmethod
    def from_result(cls, result: CampaignResult) -> "CampaignOutcome":
        return cls(result.config.rng_seed, list(result.events), list(result.findings), result.executions)


class CampaignWorker:
    """
    One campaign in a separate thread.

    The campaign checks a stop event between executions, so stop() returns
    promptly; the partial result is still available afterwards.
    """

    def __init__(self, contract: Contract, config: CampaignConfig, callback: Optional[Callable[[StatsEvent], None]] = None):
        """
        Initialize the worker.

        Args:
            contract: contract to fuzz
            config: campaign configuration
            callback: called with every event as it is emitted (from the worker thread)
        """
        self.contract = contract
        self.config = config
        self.callback = callback
        self._stop_event = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self.result: Optional[CampaignResult] = None
        self.error: Optional[BaseException] = None

    def start(self):
        """Start the campaign."""
        if self._thread and self._thread.is_alive():
            return
        self._stop_event.clear()
        self.result = None
        self.error = None
        self._thread = threading.Thread(target=self._run_loop, daemon=True)
        self._thread.start()

    def stop(self, timeout: float = 2.0):
        """Ask the campaign to stop and wait for it."""
        self._stop_event.set()
        self.join(timeout)

    def join(self, timeout: Optional[float] = None):
        if self._thread:
            self._thread.join(timeout=timeout)
            if not self._thread.is_alive():
                self._thread = None

    def is_running(self) -> bool:
        return self._thread is not None and self._thread.is_alive()

    def _run_loop(self):
        try:
            fuzzer = GreyboxFuzzer(
                self.contract,
                self.config,
                recorder=StatsRecorder(listener=self.callback),
                stop_event=self._stop_event,
            )
            self.result = fuzzer.fuzz_loop()
        except Exception as e:
            logger.exception("campaign on %s (seed %d) failed", self.contract.name, self.config.rng_seed)
            self.error = e


def _run_campaign_job(source: str, config_data: Dict) -> CampaignOutcome:
    """Process-pool entry point; takes and returns only picklable data."""
    config = CampaignConfig.from_dict(config_data)
    try:
        result = GreyboxFuzzer(parse_contract(source), config).fuzz_loop()
    except Exception as e:
        return CampaignOutcome(config.rng_seed, error=f"{type(e).__name__}: {e}")
    return CampaignOutcome.from_result(result)


class MultiCampaignRunner:
    """
    Repeats one configuration over several seeds.

    Campaigns share nothing; each worker process runs whole campaigns and
    event streams are only collected once a campaign has finished.
    """

    def __init__(self, source: str, config: CampaignConfig, seeds: Sequence[int], jobs: int = 0):
        """
        Args:
            source: contract source (parsed inside each worker)
            config: configuration shared by all campaigns; its seed is replaced per campaign
            seeds: one campaign per seed
            jobs: worker processes; 0 means one per CPU
        """
        self.source = source
        self.config = config
        self.seeds = list(seeds)
        self.jobs = jobs

    def configs(self) -> List[CampaignConfig]:
        return [replace(self.config, rng_seed=seed) for seed in self.seeds]

    def run(self) -> List[CampaignOutcome]:
        """
        Run all campaigns.

        Returns:
            Outcomes in seed order
        """
        configs = self.configs()
        workers = HostInspector.worker_count(self.jobs, len(configs))
        logger.info("running %d campaigns on %d workers", len(configs), workers)
        if workers == 1:
            return [_run_campaign_job(self.source, config.to_dict()) for config in configs]

        outcomes: Dict[int, CampaignOutcome] = {}
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_run_campaign_job, self.source, config.to_dict()): index for index, config in enumerate(configs)}
            for future in as_completed(futures):
                index = futures[future]
                outcome = future.result()
                if outcome.error:
                    logger.error("campaign with seed %d failed: %s", outcome.seed, outcome.error)
                else:
                    logger.info("campaign with seed %d finished after %d executions", outcome.seed, outcome.executions)
                outcomes[index] = outcome
        return [outcomes[index] for index in range(len(configs))]
