"""
Value Domain Module
64-bit two's-complement words shared by the parser, the VM and the fuzzer.

Values are held as canonical signed Python ints in [INT_MIN, INT_MAX];
storage slot addresses are held as unsigned ints in [0, WORD_MASK].
"""

WORD_BITS = 64
WORD_MODULUS = 1 << WORD_BITS
WORD_MASK = WORD_MODULUS - 1
INT_MIN = -(1 << (WORD_BITS - 1))
INT_MAX = (1 << (WORD_BITS - 1)) - 1


def wrap(value: int) -> int:
    """Reduce an unbounded int to the canonical signed 64-bit value."""
    value &= WORD_MASK
    if value > INT_MAX:
        value -= WORD_MODULUS
    return value


def to_unsigned(value: int) -> int:
    """Reinterpret a word as an unsigned 64-bit int."""
    return value & WORD_MASK


def clamp(value: int) -> int:
    """Saturate an unbounded int into the signed 64-bit range (no wrapping)."""
    if value < INT_MIN:
        return INT_MIN
    if value > INT_MAX:
        return INT_MAX
    return value


def fits_literal(value: int) -> bool:
    """True when a source literal is representable as a signed or unsigned word."""
    return INT_MIN <= value <= WORD_MASK
