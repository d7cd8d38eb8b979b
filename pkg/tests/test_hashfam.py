"""Tests for dense families with sparse k-wise intersections."""
from fractions import Fraction
from itertools import combinations

import pytest

from bushycalc.errors import GenerationError, PreconditionError
from bushycalc.hashfam import (
    HashFamily,
    HashViolation,
    generate_hash_family,
    pick_hat_epsilon,
    sampling_density,
    verify_hash_family,
)
from bushycalc.trees import CylinderSet, all_bits


def admissible_by_scan(eps, delta, k):
    # independent oracle: scan every fraction with denominator <= 64
    return [
        Fraction(num, den)
        for den in range(1, 65)
        for num in range(1, den)
        if eps < Fraction(num, den) and Fraction(num, den) ** k < delta
    ]


def density_by_algebra(eps, delta, k):
    """Exact nearest-to-midpoint selection for k <= 2, no bisection.

    For k=2 the midpoint is m = (eps + sqrt(delta))/2; which of two
    candidates a < b lies closer to m reduces to comparing (a+b-eps)^2
    against delta, an exact rational test.
    """
    cands = admissible_by_scan(eps, delta, k)
    if not cands:
        return None
    best = None
    for cand in sorted(cands):
        if best is None:
            best = cand
            continue
        a, b = best, cand  # a < b by the sort
        lhs = a + b - eps
        if k == 1:
            closer_is_a = lhs > delta
            tie = lhs == delta
        else:
            closer_is_a = lhs**2 > delta
            tie = lhs**2 == delta
        if not closer_is_a or tie:  # prefer the larger on ties
            best = b
    return best


def test_hat_epsilon_frozen_values():
    # largest denominator-64 rational strictly between 2/5 and sqrt(1/5)
    assert pick_hat_epsilon(Fraction(2, 5), Fraction(1, 5), 2) == Fraction(21, 47)
    # between 2/5 and sqrt(1/4) = 1/2
    assert pick_hat_epsilon(Fraction(2, 5), Fraction(1, 4), 2) == Fraction(31, 63)
    # no room: any density above 1/2 squares to at least 1/4 > 1/5
    assert pick_hat_epsilon(Fraction(1, 2), Fraction(1, 5), 2) is None
    # k = 1 collapses to a density strictly between eps and delta
    assert pick_hat_epsilon(Fraction(1, 3), Fraction(1, 2), 1) == Fraction(31, 63)


def test_sampling_density_frozen_values():
    assert sampling_density(Fraction(2, 5), Fraction(1, 4), 2) == Fraction(9, 20)
    assert sampling_density(Fraction(2, 5), Fraction(1, 5), 2) == Fraction(25, 59)
    # the boundary case used by small-measure capture at lambda = 1/2
    assert sampling_density(Fraction(1, 2), Fraction(1, 2), 2) == Fraction(35, 58)
    assert sampling_density(Fraction(1, 3), Fraction(1, 2), 1) == Fraction(5, 12)
    assert sampling_density(Fraction(1, 2), Fraction(1, 5), 2) is None


def test_density_selection_matches_scan():
    grid = [Fraction(a, b) for b in (3, 5, 7, 8) for a in range(1, b)]
    deltas = (Fraction(1, 5), Fraction(1, 4), Fraction(1, 2), Fraction(7, 8))
    for eps in grid:
        for delta in deltas:
            for k in (1, 2, 3):
                scan = admissible_by_scan(eps, delta, k)
                assert pick_hat_epsilon(eps, delta, k) == (max(scan) if scan else None)
            for k in (1, 2):
                assert sampling_density(eps, delta, k) == density_by_algebra(eps, delta, k)


def _family_of(ground_bits, string_sets, k, delta, eps):
    return HashFamily(
        ground_bits=ground_bits,
        sets=tuple(CylinderSet.of(s) for s in string_sets),
        k=k,
        delta=delta,
        epsilon=eps,
        hat_epsilon=eps,
        seed=0,
    )


def test_verify_flags_sparse_member():
    dense = set(all_bits(4))
    sparse = set(list(all_bits(4))[:6])  # 6/16 = 3/8, not above 2/5
    fam = _family_of(4, [dense, sparse], 2, Fraction(1, 4), Fraction(2, 5))
    violation = verify_hash_family(fam)
    assert violation == HashViolation("density", (1,), Fraction(3, 8), Fraction(2, 5))


def test_verify_flags_fat_intersection():
    dense = set(all_bits(4))
    fam = _family_of(4, [dense, dense], 2, Fraction(1, 4), Fraction(2, 5))
    violation = verify_hash_family(fam)
    assert violation == HashViolation("intersection", (0, 1), Fraction(1), Fraction(1, 4))


def test_verify_flags_wrong_ground_length():
    fam = _family_of(4, [{"000", "111"}], 1, Fraction(9, 10), Fraction(1, 5))
    violation = verify_hash_family(fam)
    assert violation is not None and violation.kind == "ground"


def test_generate_produces_verified_family():
    fam = generate_hash_family(Fraction(2, 5), Fraction(1, 4), k=2, n=3, seed=7)
    assert len(fam.sets) == 4
    assert 4 <= fam.ground_bits <= 16 and fam.ground_bits % 2 == 0
    assert verify_hash_family(fam) is None
    # recheck the guarantees directly from the strings
    ground = 2**fam.ground_bits
    members = [set(c.strings) for c in fam.sets]
    for m in members:
        assert all(len(s) == fam.ground_bits for s in m)
        assert Fraction(len(m), ground) > Fraction(2, 5)
    for i, j in combinations(range(4), 2):
        assert Fraction(len(members[i] & members[j]), ground) < Fraction(1, 4)


def test_generate_is_deterministic():
    a = generate_hash_family(Fraction(2, 5), Fraction(1, 4), k=2, n=2, seed=41)
    b = generate_hash_family(Fraction(2, 5), Fraction(1, 4), k=2, n=2, seed=41)
    assert a == b
    c = generate_hash_family(Fraction(2, 5), Fraction(1, 4), k=2, n=2, seed=42)
    assert c.sets != a.sets


def test_generate_rejects_impossible_density():
    with pytest.raises(PreconditionError):
        generate_hash_family(Fraction(1, 2), Fraction(1, 5), k=2, n=3, seed=1)
    with pytest.raises(PreconditionError):
        generate_hash_family(Fraction(2, 5), Fraction(1, 4), k=0, n=3, seed=1)


def test_generate_at_boundary_density():
    # eps = delta = 1/2 is the capture regime: dense sets, pairwise below 1/2
    fam = generate_hash_family(Fraction(1, 2), Fraction(1, 2), k=2, n=2, seed=5)
    assert verify_hash_family(fam) is None
    ground = 2**fam.ground_bits
    members = [set(c.strings) for c in fam.sets]
    for m in members:
        assert Fraction(len(m), ground) > Fraction(1, 2)
    for i, j in combinations(range(3), 2):
        assert Fraction(len(members[i] & members[j]), ground) < Fraction(1, 2)


def test_generate_reports_exhaustion():
    # 13 sets on a 16-point ground: some pair always overlaps in 4 of 16 points
    with pytest.raises(GenerationError) as exc:
        generate_hash_family(Fraction(2, 5), Fraction(1, 4), k=2, n=12, seed=3, max_bits=4)
    assert exc.value.stats["attempts"] == 8
