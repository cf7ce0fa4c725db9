"""
Input Mutator Module
Single-scalar mutation of fuzz cases.

Every mutation changes exactly one fuzzable scalar, so any two consecutive
inputs handed to the predictor differ in one value only.
"""

from __future__ import annotations

import random
from typing import Iterable, List, Optional, Tuple

from contract_vm import ACCOUNTS
from fuzz_case import ScalarKind, ScalarRef, TestCase
from value_domain import INT_MAX, INT_MIN, WORD_BITS, wrap

ARITH_MAX = 32
MAX_ATTEMPTS = 4

# Boundary values known to trigger integer-related bugs, widened to 64 bits.
INTERESTING_8 = [-128, -1, 0, 1, 16, 32, 64, 100, 127]
INTERESTING_16 = [-32768, -129, 128, 255, 256, 512, 1000, 1024, 4096, 32767]
INTERESTING_32 = [-2147483648, -100663046, -32769, 32768, 65535, 65536, 100663045, 2147483647]
INTERESTING_64 = [INT_MIN, INT_MAX, -(1 << 32), 1 << 32]
POWERS_OF_TWO = [1 << bit for bit in range(1, WORD_BITS - 1)]

INTERESTING_VALUES: Tuple[int, ...] = tuple(
    sorted(set(INTERESTING_8 + INTERESTING_16 + INTERESTING_32 + INTERESTING_64 + POWERS_OF_TWO))
)


class InputMutator:
    """
    AFL-style scalar mutator.

    Strategies: flip one bit, add or subtract a small delta, draw a random
    word, or substitute an interesting constant (optionally one of the
    literals harvested from the contract source).
    """

    def __init__(self, rng: random.Random, literals: Iterable[int] = (), harvest_literals: bool = True):
        self.rng = rng
        self.literals: List[int] = sorted(set(literals)) if harvest_literals else []
        self._strategies = (self._bit_flip, self._arith, self._random_word, self._interesting)

    def fuzz_input(self, test: TestCase, refs: Optional[List[ScalarRef]] = None) -> Tuple[TestCase, ScalarRef]:
        """
        Clone a test with exactly one fuzzable scalar mutated.

        Args:
            test: test to mutate
            refs: candidate scalars (defaults to every fuzzable scalar of the test)

        Returns:
            (mutated test, reference of the changed scalar)
        """
        candidates = refs if refs is not None else test.scalars()
        ref = self.rng.choice(candidates)
        original = test.get(ref)
        value = original
        for _ in range(MAX_ATTEMPTS):
            value = self.mutate_sender(original) if ref.kind is ScalarKind.SENDER else self.mutate_value(original)
            if value != original:
                break
        return test.with_value(ref, value), ref

    def mutate_value(self, value: int) -> int:
        return wrap(self.rng.choice(self._strategies)(value))

    def mutate_sender(self, sender: int) -> int:
        others = [index for index in range(len(ACCOUNTS)) if index != sender]
        return self.rng.choice(others)

    def _bit_flip(self, value: int) -> int:
        return value ^ (1 << self.rng.randrange(WORD_BITS))

    def _arith(self, value: int) -> int:
        delta = self.rng.randint(1, ARITH_MAX)
        return value + delta if self.rng.random() < 0.5 else value - delta

    def _random_word(self, value: int) -> int:
        return self.rng.getrandbits(WORD_BITS)

    def _interesting(self, value: int) -> int:
        if self.literals and self.rng.random() < 0.5:
            return self.rng.choice(self.literals)
        return self.rng.choice(INTERESTING_VALUES)
