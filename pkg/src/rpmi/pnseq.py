"""M-sequences and the designed phase sequences built from them.

Conventions
-----------
A generating polynomial ``f(x) = sum c_k x^k`` of order ``n`` drives the
recurrence ``a[t+n] = sum_{k<n} c_k a[t+k] (mod 2)``. The LFSR seed is an
integer whose bit ``k`` is the initial output bit ``a[k]``. Because the
sequence is a linear function of its first ``n`` bits, the window
``a[k..k+n-1]`` of each cyclic shift is a GF(2) coordinate vector for that
shift, which is what the shift selection search works on.
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    InfeasibleSelectionError,
    InvalidArgumentError,
    NonPrimitivePolynomialError,
)

__all__ = [
    "GeneratorPolynomial",
    "MSequence",
    "BalancedCodeSequence",
    "PhaseSequenceSet",
    "ShiftConstraintWarning",
    "PRIMITIVE_POLYNOMIALS",
    "PAPER_POLYNOMIAL",
    "default_polynomial",
    "lfsr_generate",
    "enumerate_shifts",
    "balance",
    "codes_to_phases",
    "closure_sequence",
    "select_shifts",
    "build_phase_set",
    "random_phase_set",
]

TWO_PI = 2.0 * math.pi
HALF_PI = 0.5 * math.pi


class ShiftConstraintWarning(UserWarning):
    """Raised (as a warning) when the order constraint n >= N - 2 is violated."""


_TERM_RE = re.compile(r"^(?:1|x(?:\^(\d+))?)$")


@dataclass(frozen=True)
class GeneratorPolynomial:
    """Binary polynomial given by the set of exponents with nonzero coefficient."""

    exponents: tuple[int, ...]

    def __post_init__(self):
        exps = tuple(sorted(set(int(e) for e in self.exponents)))
        object.__setattr__(self, "exponents", exps)
        if not exps or exps[0] != 0:
            raise InvalidArgumentError("polynomial must contain the constant term x^0")
        if exps[-1] < 2:
            raise InvalidArgumentError("polynomial order must be at least 2")

    @property
    def order(self) -> int:
        return self.exponents[-1]

    @property
    def taps(self) -> int:
        """Coefficient bit-set; bit ``k`` is the coefficient of ``x^k``."""
        return sum(1 << e for e in self.exponents)

    @property
    def feedback_mask(self) -> int:
        return self.taps & ((1 << self.order) - 1)

    @classmethod
    def parse(cls, text: str) -> "GeneratorPolynomial":
        """Parse ``"1+x^2+x^3+x^4+x^8"`` style text (terms in any order)."""
        exps = []
        for term in text.replace(" ", "").split("+"):
            m = _TERM_RE.match(term)
            if m is None:
                raise InvalidArgumentError(f"cannot parse polynomial term {term!r} in {text!r}")
            if term == "1":
                exps.append(0)
            else:
                exps.append(int(m.group(1)) if m.group(1) else 1)
        if len(exps) != len(set(exps)):
            raise InvalidArgumentError(f"repeated term in polynomial {text!r}")
        return cls(tuple(exps))

    def __str__(self) -> str:
        parts = []
        for e in self.exponents:
            parts.append("1" if e == 0 else "x" if e == 1 else f"x^{e}")
        return "+".join(parts)


# Primitive polynomials over GF(2); each entry is re-verified by period in tests.
PRIMITIVE_POLYNOMIALS: dict[int, GeneratorPolynomial] = {
    n: GeneratorPolynomial.parse(text)
    for n, text in {
        2: "1+x+x^2",
        3: "1+x+x^3",
        4: "1+x+x^4",
        5: "1+x^2+x^5",
        6: "1+x+x^6",
        7: "1+x+x^7",
        8: "1+x^2+x^3+x^4+x^8",
        9: "1+x^4+x^9",
        10: "1+x^3+x^10",
        11: "1+x^2+x^11",
        12: "1+x+x^4+x^6+x^12",
        13: "1+x+x^3+x^4+x^13",
        14: "1+x+x^6+x^10+x^14",
        15: "1+x+x^15",
        16: "1+x+x^3+x^12+x^16",
    }.items()
}

PAPER_POLYNOMIAL = PRIMITIVE_POLYNOMIALS[8]


def default_polynomial(slots: int) -> GeneratorPolynomial:
    """Smallest shipped polynomial whose shift space can host ``slots - 1`` rows exactly."""
    n = max(2, slots - 1)
    if n not in PRIMITIVE_POLYNOMIALS:
        raise InvalidArgumentError(f"no shipped polynomial of order {n} (N={slots})")
    return PRIMITIVE_POLYNOMIALS[n]


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class MSequence:
    bits: np.ndarray
    source_poly: GeneratorPolynomial
    shift: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bits", _frozen(self.bits, np.uint8))

    @property
    def order(self) -> int:
        return self.source_poly.order

    @property
    def period(self) -> int:
        return len(self.bits)

    def window(self, offset: int) -> int:
        """Coordinate vector of the shift by ``offset``: its first ``n`` bits as an int."""
        n, p = self.order, self.period
        return sum(int(self.bits[(offset + t) % p]) << t for t in range(n))

    def __eq__(self, other):
        if not isinstance(other, MSequence):
            return NotImplemented
        return (
            self.source_poly == other.source_poly
            and self.shift == other.shift
            and np.array_equal(self.bits, other.bits)
        )

    def __hash__(self):
        return hash((self.source_poly, self.shift, self.bits.tobytes()))


@dataclass(frozen=True, eq=False)
class BalancedCodeSequence:
    codes: np.ndarray

    def __post_init__(self):
        codes = _frozen(self.codes, np.uint8)
        if codes.ndim != 1 or codes.size == 0 or np.any(codes > 1):
            raise InvalidArgumentError("codes must be a nonempty binary vector")
        if 2 * int(codes.sum()) != codes.size:
            raise InvalidArgumentError(
                f"codes are not balanced: {int(codes.sum())} ones out of {codes.size}"
            )
        object.__setattr__(self, "codes", codes)

    def __len__(self):
        return self.codes.size

    def __eq__(self, other):
        if not isinstance(other, BalancedCodeSequence):
            return NotImplemented
        return np.array_equal(self.codes, other.codes)

    def __hash__(self):
        return hash(self.codes.tobytes())


@dataclass(frozen=True, eq=False)
class PhaseSequenceSet:
    """N x M matrix of modulation phases in radians.

    ``mode`` is ``"designed"`` (M-sequence construction) or ``"uniform-random"``.
    Designed sets also carry the polynomial and shift offsets they came from.
    """

    phases: np.ndarray
    mode: str = "designed"
    poly: Optional[GeneratorPolynomial] = None
    shifts: Optional[tuple[int, ...]] = None
    seed: Optional[int] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        phases = _frozen(self.phases, np.float64)
        if phases.ndim != 2 or phases.shape[1] == 0:
            raise InvalidArgumentError(f"phases must be a 2-D N x M matrix, got shape {phases.shape}")
        if not np.all(np.isfinite(phases)):
            raise InvalidArgumentError("phases must be finite")
        if self.mode not in ("designed", "uniform-random"):
            raise InvalidArgumentError(f"unknown phase-set mode {self.mode!r}")
        object.__setattr__(self, "phases", phases)
        if self.shifts is not None:
            object.__setattr__(self, "shifts", tuple(int(s) for s in self.shifts))

    @property
    def slots(self) -> int:
        return self.phases.shape[0]

    @property
    def units(self) -> int:
        return self.phases.shape[1]

    @property
    def order(self) -> Optional[int]:
        return None if self.poly is None else self.poly.order

    def closure_error(self) -> float:
        """Largest distance of any column sum from the nearest multiple of 2*pi."""
        s = np.mod(self.phases.sum(axis=0), TWO_PI)
        return float(np.max(np.minimum(s, TWO_PI - s)))

    def __eq__(self, other):
        if not isinstance(other, PhaseSequenceSet):
            return NotImplemented
        return (
            self.mode == other.mode
            and self.poly == other.poly
            and self.shifts == other.shifts
            and np.array_equal(self.phases, other.phases)
        )

    def __hash__(self):
        return hash((self.mode, self.poly, self.shifts, self.phases.tobytes()))


def lfsr_generate(poly: GeneratorPolynomial, seed: int = 1) -> MSequence:
    """One full period of the LFSR output driven by ``poly`` from ``seed``.

    Raises
    ------
    InvalidArgumentError
        If the seed is zero or does not fit in ``n`` bits.
    NonPrimitivePolynomialError
        If the register state recurs before ``2**n - 1`` steps.
    """
    n = poly.order
    seed = int(seed)
    if seed == 0:
        raise InvalidArgumentError("LFSR seed must be nonzero")
    if seed < 0 or seed >= 1 << n:
        raise InvalidArgumentError(f"seed {seed} does not fit in {n} bits")
    period = (1 << n) - 1
    mask = poly.feedback_mask
    top = n - 1
    state = seed
    bits = bytearray(period)
    for t in range(period):
        bits[t] = state & 1
        fb = (state & mask).bit_count() & 1
        state = (state >> 1) | (fb << top)
        if state == seed and t + 1 < period:
            raise NonPrimitivePolynomialError(poly, t + 1)
    if state != seed:
        raise NonPrimitivePolynomialError(poly, -1)
    return MSequence(np.frombuffer(bytes(bits), dtype=np.uint8), poly, 0)


def enumerate_shifts(seq: MSequence) -> list[MSequence]:
    """All ``2**n - 1`` cyclic shifts; element ``k`` starts at bit ``k`` of ``seq``."""
    p = seq.period
    return [
        MSequence(np.roll(seq.bits, -k), seq.source_poly, (seq.shift + k) % p)
        for k in range(p)
    ]


def _check_msequence_balance(seq: MSequence) -> None:
    n = seq.order
    ones = int(seq.bits.sum())
    if seq.period != (1 << n) - 1 or ones != 1 << (n - 1):
        raise InvalidArgumentError(
            f"not a balanced M-sequence: length {seq.period}, {ones} ones (n={n})"
        )


def balance(seq: MSequence) -> BalancedCodeSequence:
    """Append a single 0 so the ``2**n`` codes hold equal numbers of 0 and 1."""
    _check_msequence_balance(seq)
    return BalancedCodeSequence(np.append(seq.bits, np.uint8(0)))


def _codes_to_quarters(codes) -> np.ndarray:
    # k-th 0 -> 0 or 2 quarter turns, k-th 1 -> 1 or 3, counters kept per code value
    codes = np.asarray(codes, dtype=np.int64)
    if np.any((codes != 0) & (codes != 1)):
        raise InvalidArgumentError("codes must be binary")
    quarters = np.empty(codes.shape, dtype=np.int64)
    for value in (0, 1):
        idx = np.flatnonzero(codes == value)
        quarters[idx] = value + 2 * (np.arange(idx.size) % 2)
    return quarters


def codes_to_phases(codes) -> np.ndarray:
    """Map binary codes to the four phases {0, pi/2, pi, 3pi/2}.

    Occurrences of code 0 alternate 0, pi, 0, pi, ... and occurrences of
    code 1 alternate pi/2, 3pi/2, ...; the two counters are independent, so
    ``2*phase mod 2pi == pi*code`` holds elementwise.

    >>> codes_to_phases([0, 0, 1, 1]) / (np.pi / 2)
    array([0., 2., 1., 3.])
    """
    if isinstance(codes, BalancedCodeSequence):
        codes = codes.codes
    return _codes_to_quarters(codes) * HALF_PI


def _quarter_multiples(rows: np.ndarray) -> Optional[np.ndarray]:
    q = rows / HALF_PI
    qi = np.rint(q)
    if np.all(np.abs(q - qi) <= 1e-12):
        return qi.astype(np.int64)
    return None


def closure_sequence(rows) -> np.ndarray:
    """Closure row ``2pi - (sum of the given rows mod 2pi)``, values in (0, 2pi].

    Rows built from quarter-turn phases are closed in exact integer arithmetic
    so the result lands on {pi/2, pi, 3pi/2, 2pi} without rounding drift.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if not np.all(np.isfinite(rows)):
        raise InvalidArgumentError("phase rows must be finite")
    if rows.shape[0] == 0:
        return np.full(rows.shape[1], TWO_PI)
    quarters = _quarter_multiples(rows)
    if quarters is not None:
        return (4 - np.mod(quarters.sum(axis=0), 4)) * HALF_PI
    return TWO_PI - np.mod(rows.sum(axis=0), TWO_PI)


def _strict_selection(vectors: Sequence[int], count: int) -> Optional[list[int]]:
    # greedy over a matroid: yields the lexicographically smallest independent set
    basis: dict[int, int] = {}
    chosen = []
    for offset, v in enumerate(vectors):
        x = v
        while x:
            hb = x.bit_length() - 1
            if hb not in basis:
                basis[hb] = x
                chosen.append(offset)
                break
            x ^= basis[hb]
        if len(chosen) == count:
            return chosen
    return None


def _offset_tolerant_selection(
    vectors: Sequence[int], count: int, slots: int, max_nodes: int
) -> Optional[list[int]]:
    """Lexicographic DFS allowing only zero-XOR subsets of size N/2.

    Such subsets leave a theta-independent constant in the correlation instead
    of a competing fringe, so the cos(N theta) period is preserved.
    """
    target = slots // 2
    p = len(vectors)
    nodes = 0

    def extend(start, chosen, xors, sizes):
        nonlocal nodes
        if len(chosen) == count:
            return chosen
        for offset in range(start, p - (count - len(chosen)) + 1):
            nodes += 1
            if nodes > max_nodes:
                raise _BudgetExhausted
            v = vectors[offset]
            hit = xors == v
            if np.any(sizes[hit] + 1 != target):
                continue
            found = extend(
                offset + 1,
                chosen + [offset],
                np.concatenate([xors, xors ^ v]),
                np.concatenate([sizes, sizes + 1]),
            )
            if found is not None:
                return found
        return None

    return extend(0, [], np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64))


class _BudgetExhausted(Exception):
    pass


def select_shifts(
    seq: MSequence,
    count: int,
    *,
    allow_offset_terms: bool = False,
    max_nodes: int = 200_000,
) -> list[int]:
    """Choose ``count`` shift offsets of ``seq`` for rows 1..N-1 (N = count + 1).

    The default criterion admits no nonempty subset of the chosen shifts whose
    XOR is the all-zero sequence; every cross term of the correlation then
    averages to exactly zero. The result is the lexicographically smallest
    such offset list.

    With ``allow_offset_terms=True`` and no strict selection available, a
    second search admits zero-XOR subsets of size exactly N/2 (N even). Each
    one adds a theta-independent constant to the correlation but leaves the
    cos(N theta) fringe intact. This is what makes N = n + 2 reachable.

    Raises
    ------
    InfeasibleSelectionError
        When no admissible selection exists or the search budget runs out.
    """
    count = int(count)
    if count < 1:
        raise InvalidArgumentError("count must be at least 1")
    _check_msequence_balance(seq)
    n = seq.order
    slots = count + 1
    if n < slots - 2:
        warnings.warn(
            f"generating polynomial order n={n} violates n >= N-2 for N={slots}",
            ShiftConstraintWarning,
            stacklevel=2,
        )
    vectors = [seq.window(k) for k in range(seq.period)]
    if count <= n:
        chosen = _strict_selection(vectors, count)
        if chosen is not None:
            return chosen
    if not allow_offset_terms:
        raise InfeasibleSelectionError(
            n, slots, f"{count} independent shifts exceed the {n}-dimensional shift space"
        )
    if slots % 2:
        raise InfeasibleSelectionError(
            n, slots, "dependent shifts always leave a competing fringe when N is odd"
        )
    try:
        chosen = _offset_tolerant_selection(vectors, count, slots, max_nodes)
    except _BudgetExhausted:
        raise InfeasibleSelectionError(n, slots, f"search budget of {max_nodes} nodes exhausted")
    if chosen is None:
        raise InfeasibleSelectionError(n, slots, "exhaustive search found no admissible selection")
    return chosen


def build_phase_set(
    poly: GeneratorPolynomial,
    slots: int,
    seed: int = 1,
    *,
    allow_offset_terms: bool = False,
) -> PhaseSequenceSet:
    """Designed ``slots x 2**n`` phase set: selected shifts, balanced, mapped, closed."""
    slots = int(slots)
    if slots < 2:
        raise InvalidArgumentError("designed phase sets need N >= 2")
    base = lfsr_generate(poly, seed)
    offsets = select_shifts(base, slots - 1, allow_offset_terms=allow_offset_terms)
    shifted = enumerate_shifts(base)
    quarters = np.vstack([_codes_to_quarters(balance(shifted[k]).codes) for k in offsets])
    closing = 4 - np.mod(quarters.sum(axis=0), 4)
    phases = np.vstack([quarters, closing]) * HALF_PI
    return PhaseSequenceSet(phases, "designed", poly, tuple(offsets), seed)


def random_phase_set(slots: int, units: int, seed: int) -> PhaseSequenceSet:
    """Rows 1..N-1 i.i.d. uniform on [0, 2pi); row N closes every column."""
    slots, units = int(slots), int(units)
    if slots < 2 or units < 1:
        raise InvalidArgumentError("need N >= 2 and M >= 1")
    rng = np.random.default_rng(seed)
    rows = rng.uniform(0.0, TWO_PI, size=(slots - 1, units))
    last = closure_sequence(rows)
    # keep entries in [0, 2pi) for this mode
    last = np.where(last >= TWO_PI, last - TWO_PI, last)
    return PhaseSequenceSet(np.vstack([rows, last]), "uniform-random", seed=seed)
