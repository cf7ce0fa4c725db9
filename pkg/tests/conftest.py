from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from benchmark_corpus import load_benchmark  # noqa: E402
from contract_parser import Contract, SourceLoc  # noqa: E402


def find_loc(contract: Contract, needle: str, occurrence: int = 0) -> SourceLoc:
    """1-based line/column of the first character of `needle` in the contract source."""
    seen = 0
    for number, line in enumerate(contract.source.splitlines(), start=1):
        col = line.find(needle)
        while col >= 0:
            if seen == occurrence:
                return SourceLoc(number, col + 1)
            seen += 1
            col = line.find(needle, col + 1)
    raise LookupError(needle)


@pytest.fixture
def baz() -> Contract:
    return load_benchmark("baz")


@pytest.fixture
def foo() -> Contract:
    return load_benchmark("foo")


@pytest.fixture
def wallet() -> Contract:
    return load_benchmark("wallet")


@pytest.fixture
def nonlinear() -> Contract:
    return load_benchmark("nonlinear")
