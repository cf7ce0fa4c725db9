"""
Host Info Module
CPU and memory information used to size campaign worker pools.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Dict, Optional

import psutil

logger = logging.getLogger(__name__)

FALLBACK_CPU_COUNT = 4


@dataclass
class HostInfo:
    """Snapshot of the machine running the campaigns."""

    logical_cpus: int
    physical_cpus: Optional[int]
    total_memory: int
    available_memory: int
    process_rss: int

    def get_memory_display(self) -> str:
        """Get human-readable available/total memory string."""
        return f"{self.available_memory / 2**30:.1f}G free of {self.total_memory / 2**30:.1f}G"

    def to_dict(self) -> Dict[str, Optional[int]]:
        return {
            "logicalCpus": self.logical_cpus,
            "physicalCpus": self.physical_cpus,
            "totalMemory": self.total_memory,
            "availableMemory": self.available_memory,
            "processRss": self.process_rss,
        }

    def __str__(self) -> str:
        return f"{self.logical_cpus} CPUs, {self.get_memory_display()}"


class HostInspector:
    """Reads host resources through psutil."""

    @staticmethod
    def cpu_count() -> int:
        try:
            count = psutil.cpu_count()
        except Exception as e:
            logger.warning("could not read CPU count: %s", e)
            count = None
        return count or FALLBACK_CPU_COUNT

    @staticmethod
    def process_rss() -> int:
        """Resident set size of this process in bytes."""
        return psutil.Process(os.getpid()).memory_info().rss

    @staticmethod
    def snapshot() -> HostInfo:
        memory = psutil.virtual_memory()
        return HostInfo(
            logical_cpus=HostInspector.cpu_count(),
            physical_cpus=psutil.cpu_count(logical=False),
            total_memory=memory.total,
            available_memory=memory.available,
            process_rss=HostInspector.process_rss(),
        )

    @staticmethod
    def worker_count(requested: int = 0, campaigns: Optional[int] = None) -> int:
        """
        Number of parallel campaign workers.

        Args:
            requested: workers asked for; 0 or less means one per CPU
            campaigns: number of campaigns to run; never start more workers than that

        Returns:
            Worker count, at least 1
        """
        cpus = HostInspector.cpu_count()
        workers = min(requested, cpus) if requested > 0 else cpus
        if requested > cpus:
            logger.warning("requested %d workers but only %d CPUs available, using %d", requested, cpus, workers)
        if campaigns is not None:
            workers = min(workers, campaigns)
        return max(1, workers)
