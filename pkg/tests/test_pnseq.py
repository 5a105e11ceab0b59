import itertools
from contextlib import nullcontext
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import max_len_seq

from rpmi.errors import InfeasibleSelectionError, InvalidArgumentError, NonPrimitivePolynomialError
from rpmi.pnseq import (
    PAPER_POLYNOMIAL,
    PRIMITIVE_POLYNOMIALS,
    BalancedCodeSequence,
    GeneratorPolynomial,
    MSequence,
    ShiftConstraintWarning,
    balance,
    build_phase_set,
    closure_sequence,
    codes_to_phases,
    enumerate_shifts,
    lfsr_generate,
    random_phase_set,
    select_shifts,
)

PI = math.pi


def recurrence(poly, seed, length):
    """Reference LFSR: the linear recurrence written out on a Python list."""
    n = poly.order
    a = [(seed >> k) & 1 for k in range(n)]
    while len(a) < length:
        t = len(a) - n
        a.append(sum(a[t + k] for k in poly.exponents if k < n) % 2)
    return np.array(a[:length], dtype=np.uint8)


def is_rotation(a, b):
    return any(np.array_equal(np.roll(a, -k), b) for k in range(len(a)))


def zero_xor_subsets(rows):
    rows = [np.asarray(r) for r in rows]
    found = []
    for r in range(1, len(rows) + 1):
        for combo in itertools.combinations(range(len(rows)), r):
            acc = np.zeros_like(rows[0])
            for i in combo:
                acc ^= rows[i]
            if not acc.any():
                found.append(combo)
    return found


class TestPolynomial:
    def test_parse_and_format(self):
        p = GeneratorPolynomial.parse("x^8 + x^4 + x^3 + x^2 + 1")
        assert p == PAPER_POLYNOMIAL
        assert str(p) == "1+x^2+x^3+x^4+x^8"
        assert p.order == 8
        assert p.taps == 0b100011101

    @pytest.mark.parametrize("text", ["x^3+x", "1", "1+y^2", "1+x+x"])
    def test_rejects_bad_polynomials(self, text):
        with pytest.raises(InvalidArgumentError):
            GeneratorPolynomial.parse(text)

    def test_table_covers_2_to_16(self):
        assert sorted(PRIMITIVE_POLYNOMIALS) == list(range(2, 17))

    @pytest.mark.parametrize("n", range(11, 17))
    def test_large_table_entries_are_primitive(self, n):
        seq = lfsr_generate(PRIMITIVE_POLYNOMIALS[n], 1)
        assert seq.period == 2**n - 1


class TestLfsrGenerate:
    def test_reference_polynomial_length(self):
        for seed in (1, 0x5A, 0xFF):
            assert lfsr_generate(PAPER_POLYNOMIAL, seed).period == 255

    def test_order_two_period(self):
        seq = lfsr_generate(GeneratorPolynomial.parse("1+x+x^2"), 1)
        assert seq.period == 3

    def test_order_three_by_hand(self):
        # a[t+3] = a[t] + a[t+1]; seed 001 gives a0=1, a1=0, a2=0
        seq = lfsr_generate(GeneratorPolynomial.parse("1+x+x^3"), 0b001)
        assert seq.bits.tolist() == [1, 0, 0, 1, 0, 1, 1]
        assert seq.bits.sum() == 4

    @pytest.mark.parametrize("n", range(2, 11))
    def test_matches_reference_recurrence(self, n):
        poly = PRIMITIVE_POLYNOMIALS[n]
        for seed in (1, 2**n - 1, (2**n - 1) // 3 or 1):
            got = lfsr_generate(poly, seed).bits
            assert np.array_equal(got, recurrence(poly, seed, 2**n - 1))

    @pytest.mark.parametrize("n", range(3, 11))
    def test_matches_scipy_up_to_rotation(self, n):
        poly = PRIMITIVE_POLYNOMIALS[n]
        taps = [e for e in poly.exponents if 0 < e < n]
        ref = max_len_seq(n, taps=taps)[0].astype(np.uint8)
        assert is_rotation(ref, lfsr_generate(poly, 1).bits)

    def test_deterministic(self):
        a = lfsr_generate(PAPER_POLYNOMIAL, 77)
        b = lfsr_generate(PAPER_POLYNOMIAL, 77)
        assert a == b and a.bits.tobytes() == b.bits.tobytes()

    def test_zero_seed(self):
        with pytest.raises(InvalidArgumentError):
            lfsr_generate(PAPER_POLYNOMIAL, 0)

    def test_non_primitive_reports_period(self):
        # 1 + x^2 + x^4 = (1 + x + x^2)^2: not primitive
        poly = GeneratorPolynomial.parse("1+x^2+x^4")
        with pytest.raises(NonPrimitivePolynomialError) as info:
            lfsr_generate(poly, 1)
        assert 0 < info.value.period < 15
        assert str(info.value.period) in str(info.value)

    def test_bits_are_immutable(self):
        seq = lfsr_generate(PAPER_POLYNOMIAL)
        with pytest.raises(ValueError):
            seq.bits[0] = 1


class TestShifts:
    def test_order_three_has_seven(self):
        shifts = enumerate_shifts(lfsr_generate(PRIMITIVE_POLYNOMIALS[3]))
        assert len(shifts) == 7
        assert len({s.bits.tobytes() for s in shifts}) == 7
        assert [s.shift for s in shifts] == list(range(7))

    def test_reference_order_has_255(self):
        shifts = enumerate_shifts(lfsr_generate(PAPER_POLYNOMIAL))
        assert len({s.bits.tobytes() for s in shifts}) == 255

    @pytest.mark.parametrize("n", range(2, 7))
    def test_shift_and_add(self, n):
        shifts = enumerate_shifts(lfsr_generate(PRIMITIVE_POLYNOMIALS[n]))
        table = {s.bits.tobytes() for s in shifts}
        for a, b in itertools.combinations(shifts, 2):
            assert (a.bits ^ b.bits).tobytes() in table

    def test_window_is_linear(self):
        seq = lfsr_generate(PRIMITIVE_POLYNOMIALS[5])
        shifts = enumerate_shifts(seq)
        lookup = {s.bits.tobytes(): s.shift for s in shifts}
        for k, l in [(0, 1), (3, 17), (5, 30)]:
            m = lookup[(shifts[k].bits ^ shifts[l].bits).tobytes()]
            assert seq.window(m) == seq.window(k) ^ seq.window(l)


class TestBalance:
    def test_order_two(self):
        seq = MSequence(np.array([1, 1, 0]), PRIMITIVE_POLYNOMIALS[2])
        assert balance(seq).codes.tolist() == [1, 1, 0, 0]

    def test_reference_length(self):
        codes = balance(lfsr_generate(PAPER_POLYNOMIAL)).codes
        assert len(codes) == 256
        assert codes.sum() == 128

    def test_rejects_unbalanced(self):
        seq = MSequence(np.array([1, 0, 0]), PRIMITIVE_POLYNOMIALS[2])
        with pytest.raises(InvalidArgumentError):
            balance(seq)

    def test_codes_type_checks_balance(self):
        with pytest.raises(InvalidArgumentError):
            BalancedCodeSequence(np.array([1, 1, 1, 0]))


class TestCodesToPhases:
    @pytest.mark.parametrize(
        "codes, quarters",
        [([0, 0, 1, 1], [0, 2, 1, 3]), ([0, 1, 0, 1], [0, 1, 2, 3])],
    )
    def test_examples(self, codes, quarters):
        assert np.allclose(codes_to_phases(codes), np.array(quarters) * PI / 2, atol=0)

    @given(st.integers(1, 32).flatmap(lambda h: st.permutations([0] * h + [1] * h)))
    @settings(max_examples=200)
    def test_doubling_recovers_codes(self, codes):
        phases = codes_to_phases(codes)
        codes = np.array(codes)
        assert set(np.round(phases / (PI / 2)).astype(int)) <= {0, 1, 2, 3}
        even = np.isin(np.round(phases / (PI / 2)), [0, 2])
        assert even.sum() == (codes == 0).sum()
        halves = np.round(phases / (PI / 2)).astype(int)
        assert abs(np.sum(halves == 0) - np.sum(halves == 2)) <= 1
        assert abs(np.sum(halves == 1) - np.sum(halves == 3)) <= 1
        doubled = np.mod(2 * phases, 2 * PI)
        assert np.allclose(doubled, PI * codes, atol=1e-12)


class TestClosure:
    def test_example_with_two_pi_corner(self):
        out = closure_sequence([[PI / 2, PI], [PI, PI]])
        assert out.tolist() == [PI / 2, 2 * PI]

    def test_single_row_zero(self):
        assert closure_sequence([[0.0]]).tolist() == [2 * PI]

    def test_generic_float_rows(self):
        rng = np.random.default_rng(3)
        rows = rng.uniform(0, 2 * PI, size=(4, 50))
        last = closure_sequence(rows)
        total = np.mod(rows.sum(axis=0) + last, 2 * PI)
        assert np.all(np.minimum(total, 2 * PI - total) < 1e-12)

    @pytest.mark.parametrize("n", [2, 3, 4])
    @pytest.mark.parametrize("slots", [2, 3, 4, 5])
    def test_designed_rows_exhaustive(self, n, slots):
        shifts = enumerate_shifts(lfsr_generate(PRIMITIVE_POLYNOMIALS[n]))
        allowed = {1, 2, 3, 4}
        for combo in itertools.combinations(range(len(shifts)), slots - 1):
            rows = np.vstack([codes_to_phases(balance(shifts[k])) for k in combo])
            q = closure_sequence(rows) / (PI / 2)
            assert set(np.round(q).astype(int)) <= allowed
            assert np.allclose(q, np.round(q), atol=0)


class TestSelectShifts:
    def test_single(self):
        assert select_shifts(lfsr_generate(PAPER_POLYNOMIAL), 1) == [0]

    def test_reference_strict_is_infeasible(self):
        with pytest.raises(InfeasibleSelectionError) as info:
            select_shifts(lfsr_generate(PAPER_POLYNOMIAL), 9)
        assert info.value.n == 8 and info.value.slots == 10

    def test_reference_with_offset_terms(self):
        seq = lfsr_generate(PAPER_POLYNOMIAL)
        offsets = select_shifts(seq, 9, allow_offset_terms=True)
        assert len(offsets) == 9 and len(set(offsets)) == 9
        rows = [balance(enumerate_shifts(seq)[k]).codes for k in offsets]
        assert [len(s) for s in zero_xor_subsets(rows)] == [5]

    def test_order_three_count_four_brute_force(self):
        seq = lfsr_generate(PRIMITIVE_POLYNOMIALS[3])
        shifts = enumerate_shifts(seq)
        feasible = [
            c for c in itertools.combinations(range(7), 4)
            if not zero_xor_subsets([shifts[k].bits for k in c])
        ]
        assert feasible == []
        with pytest.raises(InfeasibleSelectionError):
            select_shifts(seq, 4)

    @pytest.mark.parametrize("n, count", [(3, 2), (3, 3), (4, 3), (4, 4), (5, 4)])
    def test_strict_is_lexicographic_minimum(self, n, count):
        seq = lfsr_generate(PRIMITIVE_POLYNOMIALS[n])
        shifts = enumerate_shifts(seq)
        first = next(
            c for c in itertools.combinations(range(seq.period), count)
            if not zero_xor_subsets([shifts[k].bits for k in c])
        )
        assert tuple(select_shifts(seq, count)) == first

    @pytest.mark.parametrize("n, count", [(2, 3), (3, 5), (4, 5)])
    def test_offset_search_is_lexicographic_minimum(self, n, count):
        seq = lfsr_generate(PRIMITIVE_POLYNOMIALS[n])
        shifts = enumerate_shifts(seq)
        half = (count + 1) // 2

        def admissible(c):
            return all(len(s) == half for s in zero_xor_subsets([shifts[k].bits for k in c]))

        first = next((c for c in itertools.combinations(range(seq.period), count) if admissible(c)), None)
        with pytest.warns(ShiftConstraintWarning) if n < count - 1 else nullcontext():
            if first is None:
                with pytest.raises(InfeasibleSelectionError):
                    select_shifts(seq, count, allow_offset_terms=True)
            else:
                assert tuple(select_shifts(seq, count, allow_offset_terms=True)) == first

    def test_odd_slots_with_dependency_infeasible(self):
        with pytest.raises(InfeasibleSelectionError):
            select_shifts(lfsr_generate(PRIMITIVE_POLYNOMIALS[3]), 4, allow_offset_terms=True)

    def test_warns_below_order_constraint(self):
        with pytest.warns(ShiftConstraintWarning):
            with pytest.raises(InfeasibleSelectionError):
                select_shifts(lfsr_generate(PRIMITIVE_POLYNOMIALS[3]), 5)

    def test_count_must_be_positive(self):
        with pytest.raises(InvalidArgumentError):
            select_shifts(lfsr_generate(PRIMITIVE_POLYNOMIALS[3]), 0)


class TestBuildPhaseSet:
    def test_reference_shape(self):
        ps = build_phase_set(PAPER_POLYNOMIAL, 10, allow_offset_terms=True)
        assert ps.phases.shape == (10, 256)
        assert ps.closure_error() < 1e-12

    def test_value_sets(self):
        ps = build_phase_set(PRIMITIVE_POLYNOMIALS[5], 5)
        q = ps.phases / (PI / 2)
        assert set(np.unique(q[:-1])) <= {0, 1, 2, 3}
        assert set(np.unique(q[-1])) <= {1, 2, 3, 4}
        col = ps.phases.sum(axis=0) / (2 * PI)
        assert np.allclose(col, np.round(col), atol=1e-15)

    @pytest.mark.parametrize("n", range(2, 9))
    def test_closure_every_column(self, n):
        slots = min(n + 1, 8)
        ps = build_phase_set(PRIMITIVE_POLYNOMIALS[n], slots)
        assert ps.phases.shape == (slots, 2**n)
        assert ps.closure_error() <= 1e-12

    def test_deterministic(self):
        a = build_phase_set(PRIMITIVE_POLYNOMIALS[6], 5, seed=9)
        b = build_phase_set(PRIMITIVE_POLYNOMIALS[6], 5, seed=9)
        assert a == b and a.phases.tobytes() == b.phases.tobytes()

    def test_needs_two_slots(self):
        with pytest.raises(InvalidArgumentError):
            build_phase_set(PRIMITIVE_POLYNOMIALS[3], 1)


class TestRandomPhaseSet:
    def test_range_and_closure(self):
        ps = random_phase_set(6, 100, seed=4)
        assert ps.mode == "uniform-random"
        assert np.all((ps.phases >= 0) & (ps.phases < 2 * PI))
        assert ps.closure_error() < 1e-12

    def test_seeded(self):
        assert random_phase_set(3, 8, 1) == random_phase_set(3, 8, 1)
        assert random_phase_set(3, 8, 1) != random_phase_set(3, 8, 2)
