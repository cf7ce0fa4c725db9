"""
Benchmark Corpus Module
The contracts shipped with the fuzzer: four hand-written benchmarks and a
family of generated contracts whose branch conditions are linear in one
input each.
"""

from __future__ import annotations

import logging
import random
from pathlib import Path
from typing import Dict, List

from contract_parser import Contract, parse_contract

logger = logging.getLogger(__name__)

BENCHMARK_DIR = Path(__file__).resolve().parent / "benchmarks"
BENCHMARKS = ("baz", "foo", "wallet", "nonlinear")
LINEAR_CONTRACTS = 10

# Attack slot the Wallet experiments fix, and the index that reaches it after the length wraps.
WALLET_ATTACK_SLOT = 0xFFCAFFEE
WALLET_ELEMENT_BASE = 2

NONLINEAR_ROOT = 123

# Ordering comparisons only: their nonzero cost is affine in the input on either side of the constant.
_LINEAR_OPS = ("<", "<=", ">", ">=")
_LINEAR_FUNCTIONS = 3
_LINEAR_PARAMS = 3
_CONSTANT_RANGE = 10_000


def benchmark_path(name: str) -> Path:
    return BENCHMARK_DIR / f"{name}.mvc"


def load_benchmark_source(name: str) -> str:
    """
    Source text of a shipped benchmark or generated linear contract.

    Args:
        name: one of BENCHMARKS, or "linear<N>" for N in 0..9
    """
    if name.startswith("linear") and name[len("linear"):].isdigit():
        return linear_contract_source(int(name[len("linear"):]))
    if name not in BENCHMARKS:
        raise KeyError(f"unknown benchmark {name!r}")
    return benchmark_path(name).read_text(encoding="utf-8")


def load_benchmark(name: str) -> Contract:
    return parse_contract(load_benchmark_source(name))


def benchmark_names() -> List[str]:
    return list(BENCHMARKS) + [f"linear{i}" for i in range(LINEAR_CONTRACTS)]


def _linear_condition(rng: random.Random, param: str) -> str:
    op = rng.choice(_LINEAR_OPS)
    constant = rng.randint(-_CONSTANT_RANGE, _CONSTANT_RANGE)
    if rng.random() < 0.5:
        return f"{param} {op} {constant}"
    return f"{constant} {op} {param}"


def linear_contract_source(index: int) -> str:
    """
    Generate linear contract number `index`.

    Every condition compares one parameter with a constant, and no two
    conditions of a function read the same parameter, so each cost metric
    is an exact linear function of a single input.
    """
    if not 0 <= index < LINEAR_CONTRACTS:
        raise ValueError(f"linear contract index must lie in 0..{LINEAR_CONTRACTS - 1}")
    rng = random.Random(f"linear-{index}")
    params = [f"p{i}" for i in range(_LINEAR_PARAMS)]
    lines = [f"// Generated linear-condition contract {index}.", f"contract Linear{index} {{"]
    for fn_index in range(_LINEAR_FUNCTIONS):
        lines.append(f"  fn f{fn_index}({', '.join(params)}) {{")
        order = list(params)
        rng.shuffle(order)
        if rng.random() < 0.5:
            # Nested: each level guards the next.
            depth = 0
            for depth, param in enumerate(order):
                pad = "    " + "  " * depth
                lines.append(f"{pad}if ({_linear_condition(rng, param)}) {{")
            lines.append("    " + "  " * (depth + 1) + f"return {depth + 1};")
            for level in range(depth, -1, -1):
                pad = "    " + "  " * level
                lines.append(f"{pad}}}")
                lines.append(f"{pad}return {level};")
        else:
            for position, param in enumerate(order):
                lines.append(f"    if ({_linear_condition(rng, param)}) {{")
                lines.append(f"      return {position + 1};")
                lines.append("    }")
            lines.append("    return 0;")
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


def linear_corpus() -> Dict[str, Contract]:
    return {f"linear{i}": parse_contract(linear_contract_source(i)) for i in range(LINEAR_CONTRACTS)}


def write_corpus(directory: Path) -> List[Path]:
    """Write every benchmark (shipped and generated) as a .mvc file into `directory`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in benchmark_names():
        path = directory / f"{name}.mvc"
        path.write_text(load_benchmark_source(name), encoding="utf-8")
        written.append(path)
    logger.info("wrote %d benchmark contracts to %s", len(written), directory)
    return written
