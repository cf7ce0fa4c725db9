"""
Stats Stream Module
Append-only campaign event stream (one JSON object per line) and the
summary numbers derived from it.

Every summary number is recomputed from events alone, so an independent
reader of the stats file arrives at the same figures.
"""

from __future__ import annotations

import json
import logging
import statistics
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import IO, Any, Callable, Dict, Iterable, List, Optional

logger = logging.getLogger(__name__)


class EventKind(str, Enum):
    NEW_PATH = "newPath"
    BUG = "bug"
    PREDICTION_ATTEMPT = "predictionAttempt"
    PREDICTION_SUCCESS = "predictionSuccess"
    DEMAND_FLAG_SET = "demandFlagSet"
    DEMAND_FLAG_CLEARED = "demandFlagCleared"
    POOL_ADMIT = "poolAdmit"
    COVERAGE = "coverage"
    CAMPAIGN_END = "campaignEnd"


@dataclass(frozen=True)
class StatsEvent:
    seq: int
    exec_index: int
    kind: EventKind
    payload: Dict[str, Any] = field(default_factory=dict)
    wall_millis: Optional[int] = None

    def to_json(self) -> str:
        record: Dict[str, Any] = {"seq": self.seq, "execIndex": self.exec_index}
        if self.wall_millis is not None:
            record["wallMillis"] = self.wall_millis
        record["kind"] = self.kind.value
        record["payload"] = self.payload
        return json.dumps(record, sort_keys=False, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "StatsEvent":
        record = json.loads(line)
        return cls(
            seq=record["seq"],
            exec_index=record["execIndex"],
            kind=EventKind(record["kind"]),
            payload=record.get("payload", {}),
            wall_millis=record.get("wallMillis"),
        )


class StatsRecorder:
    """
    Collects events in order and optionally mirrors them to a line-delimited file.

    `seq` is strictly increasing and orders the stream. One execution can
    emit several events (a new path, its coverage and its pool admission
    share one index), so `exec_index` strictly increases between executions
    and is merely non-decreasing between events.
    """

    def __init__(self, sink: Optional[IO[str]] = None, listener: Optional[Callable[[StatsEvent], None]] = None):
        self.events: List[StatsEvent] = []
        self._sink = sink
        self._listener = listener

    def emit(self, kind: EventKind, exec_index: int, payload: Optional[Dict[str, Any]] = None, wall_millis: Optional[int] = None) -> StatsEvent:
        if self.events and exec_index < self.events[-1].exec_index:
            raise ValueError(f"event at execution {exec_index} after execution {self.events[-1].exec_index}")
        event = StatsEvent(len(self.events), exec_index, EventKind(kind), payload or {}, wall_millis)
        self.events.append(event)
        if self._sink is not None:
            self._sink.write(event.to_json() + "\n")
        if self._listener is not None:
            self._listener(event)
        return event


def write_events(path: Path, events: Iterable[StatsEvent]):
    with open(path, "w", encoding="utf-8") as handle:
        for event in events:
            handle.write(event.to_json() + "\n")


def read_events(path: Path) -> List[StatsEvent]:
    with open(path, "r", encoding="utf-8") as handle:
        return [StatsEvent.from_json(line) for line in handle if line.strip()]


@dataclass
class CampaignSummary:
    executions: int = 0
    paths: int = 0
    covered_locations: int = 0
    corpus_size: int = 0
    bugs: List[Dict[str, Any]] = field(default_factory=list)
    one_shot_attempts: int = 0
    one_shot_successes: int = 0
    prediction_attempts: int = 0
    prediction_successes: int = 0
    max_sequence_length: int = 0

    @property
    def one_shot_rate(self) -> Optional[float]:
        if not self.one_shot_attempts:
            return None
        return self.one_shot_successes / self.one_shot_attempts

    @property
    def first_bug_execs(self) -> Optional[int]:
        if not self.bugs:
            return None
        return min(bug["timeToBugExecs"] for bug in self.bugs)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "executions": self.executions,
            "paths": self.paths,
            "coveredLocations": self.covered_locations,
            "corpusSize": self.corpus_size,
            "bugs": self.bugs,
            "oneShotAttempts": self.one_shot_attempts,
            "oneShotSuccesses": self.one_shot_successes,
            "oneShotRate": self.one_shot_rate,
            "predictionAttempts": self.prediction_attempts,
            "predictionSuccesses": self.prediction_successes,
            "maxSequenceLength": self.max_sequence_length,
        }


def summarize(events: Iterable[StatsEvent]) -> CampaignSummary:
    """Recompute the campaign summary from its event stream."""
    summary = CampaignSummary()
    for event in events:
        payload = event.payload
        summary.executions = max(summary.executions, event.exec_index)
        if event.kind is EventKind.NEW_PATH:
            summary.paths += 1
            summary.corpus_size += 1
            summary.max_sequence_length = max(summary.max_sequence_length, len(payload.get("sequence", [])))
        elif event.kind is EventKind.COVERAGE:
            summary.covered_locations = payload["total"]
        elif event.kind is EventKind.BUG:
            summary.bugs.append(payload)
        elif event.kind is EventKind.PREDICTION_ATTEMPT:
            summary.prediction_attempts += 1
            if payload.get("step") == 1:
                summary.one_shot_attempts += 1
        elif event.kind is EventKind.PREDICTION_SUCCESS:
            summary.prediction_successes += 1
            if payload.get("step") == 1:
                summary.one_shot_successes += 1
        elif event.kind is EventKind.CAMPAIGN_END:
            summary.executions = payload.get("executions", summary.executions)
    return summary


def format_summary(summary: CampaignSummary, title: str = "") -> str:
    """Human-readable campaign summary."""
    lines = []
    if title:
        lines.append(title)
        lines.append("=" * len(title))
    lines.append(f"Executions:          {summary.executions}")
    lines.append(f"Paths:               {summary.paths}")
    lines.append(f"Covered locations:   {summary.covered_locations}")
    lines.append(f"Longest sequence:    {summary.max_sequence_length}")
    rate = summary.one_shot_rate
    rate_text = "N/A" if rate is None else f"{rate:.1%} ({summary.one_shot_successes}/{summary.one_shot_attempts})"
    lines.append(f"One-shot prediction: {rate_text}")
    lines.append(f"Unique bugs:         {len(summary.bugs)}")
    for bug in summary.bugs:
        witness = bug.get("witness") or {}
        length = len(witness.get("sequence", []))
        seconds = bug.get("timeToBugSeconds")
        timing = f" ({seconds:.2f}s)" if seconds is not None else ""
        lines.append(f"  {bug['kind']} at {bug['loc']} after {bug['timeToBugExecs']} execs{timing}, witness length {length}")
    return "\n".join(lines)


def median_or_none(values: List[Optional[float]], missing: Optional[float] = None) -> Optional[float]:
    """Median with absent values counted as `missing` (dropped when `missing` is None)."""
    filled = [missing if value is None else value for value in values]
    filled = [value for value in filled if value is not None]
    return statistics.median(filled) if filled else None


def aggregate(summaries: List[CampaignSummary], budget: Optional[int] = None) -> Dict[str, Any]:
    """
    Medians over repeated campaigns.

    Campaigns that found no bug count as `budget + 1` executions-to-bug when a
    budget is given, so they rank behind every successful campaign.
    """
    missing = None if budget is None else budget + 1
    return {
        "campaigns": len(summaries),
        "medianPaths": median_or_none([s.paths for s in summaries]),
        "medianCorpusSize": median_or_none([s.corpus_size for s in summaries]),
        "medianCoveredLocations": median_or_none([s.covered_locations for s in summaries]),
        "medianFirstBugExecs": median_or_none([s.first_bug_execs for s in summaries], missing),
        "campaignsWithBugs": sum(1 for s in summaries if s.bugs),
        "medianOneShotRate": median_or_none([s.one_shot_rate for s in summaries]),
    }
