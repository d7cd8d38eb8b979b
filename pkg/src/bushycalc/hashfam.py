"""Families of dense subsets of 2^N with uniformly sparse k-intersections.

A family is admissible when every member covers more than an epsilon
fraction of the ground strings while every k of them overlap in less than a
delta fraction.  Members are sampled independently at a rational density
hat_epsilon chosen strictly between epsilon and delta^(1/k); existence of
such a density (with denominator at most 64) is checked up front, and every
returned family passes exhaustive verification.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .errors import GenerationError, PreconditionError
from .seeding import rng_for
from .trees import CylinderSet, frac

MAX_DENOMINATOR = 64
FIRST_GROUND_BITS = 4
GROUND_BITS_STEP = 2
ATTEMPTS_PER_SIZE = 8


def _admissible(eps: Fraction, delta: Fraction, k: int):
    """All sampling densities with denominator <= 64 strictly above eps whose
    k-th power stays strictly below delta."""
    out = []
    for den in range(1, MAX_DENOMINATOR + 1):
        # smallest numerator strictly above eps, then climb while the power
        # constraint still holds
        num = (eps.numerator * den) // eps.denominator + 1
        while num < den:
            cand = Fraction(num, den)
            if cand**k >= delta:
                break
            out.append(cand)
            num += 1
    return out


def pick_hat_epsilon(eps: Fraction, delta: Fraction, k: int) -> Fraction | None:
    """Largest admissible density; None when no admissible density exists."""
    cands = _admissible(eps, delta, k)
    return max(cands) if cands else None


def sampling_density(eps: Fraction, delta: Fraction, k: int) -> Fraction | None:
    """Admissible density nearest the midpoint of (eps, delta^(1/k)).

    The midpoint balances the density margin against the intersection margin,
    so sampled families verify at small ground sets.  The upper endpoint is
    located by bisection with the exact test cand^k < delta.
    """
    if not _admissible(eps, delta, k):
        return None
    lo, hi = eps, Fraction(1)
    for _ in range(24):
        mid = (lo + hi) / 2
        if mid**k < delta:
            lo = mid
        else:
            hi = mid
    target = (eps + lo) / 2
    best = None
    for cand in _admissible(eps, delta, k):
        gap = abs(cand - target)
        if best is None or gap < best[0] or (gap == best[0] and cand > best[1]):
            best = (gap, cand)
    return best[1]


@dataclass(frozen=True)
class HashFamily:
    ground_bits: int
    sets: tuple  # tuple[CylinderSet, ...]
    k: int
    delta: Fraction
    epsilon: Fraction
    hat_epsilon: Fraction
    seed: int


@dataclass(frozen=True)
class HashViolation:
    kind: str  # "ground" | "density" | "intersection"
    indices: tuple
    value: Fraction
    bound: Fraction


def verify_hash_family(family: HashFamily) -> HashViolation | None:
    """Exhaustive check of densities and every k-wise intersection."""
    N = family.ground_bits
    ground = Fraction(2**N)
    member_sets = []
    for i, cyl in enumerate(family.sets):
        strings = frozenset(cyl.strings)
        if any(len(s) != N for s in strings):
            return HashViolation("ground", (i,), Fraction(0), Fraction(0))
        member_sets.append(strings)
        density = Fraction(len(strings)) / ground
        if density <= family.epsilon:
            return HashViolation("density", (i,), density, family.epsilon)
    for J in itertools.combinations(range(len(member_sets)), family.k):
        inter = frozenset.intersection(*(member_sets[j] for j in J))
        share = Fraction(len(inter)) / ground
        if share >= family.delta:
            return HashViolation("intersection", J, share, family.delta)
    return None


def _ints_admissible(members: list, N: int, k: int, eps: Fraction, delta: Fraction) -> bool:
    ground = 2**N
    for m in members:
        if Fraction(len(m), ground) <= eps:
            return False
    for J in itertools.combinations(range(len(members)), k):
        inter = set.intersection(*(members[j] for j in J))
        if Fraction(len(inter), ground) >= delta:
            return False
    return True


def generate_hash_family(
    eps,
    delta,
    k: int,
    n: int,
    seed: int,
    max_bits: int = 16,
) -> HashFamily:
    """Sample n + 1 sets at the admissible density, growing the ground set
    (N = 4, 6, ...) with eight fresh attempts per size until one verifies."""
    eps, delta = frac(eps), frac(delta)
    if not (0 < eps < 1 and 0 < delta < 1):
        raise PreconditionError(f"need eps, delta in (0, 1), got eps={eps}, delta={delta}")
    if k < 1 or n < 0:
        raise PreconditionError("k must be positive and n nonnegative")
    hat = sampling_density(eps, delta, k)
    if hat is None:
        raise PreconditionError(
            f"no sampling density with denominator <= {MAX_DENOMINATOR} lies above "
            f"{eps} with its {k}-th power below {delta}"
        )
    num, den = hat.numerator, hat.denominator
    attempts = 0
    for N in range(FIRST_GROUND_BITS, max_bits + 1, GROUND_BITS_STEP):
        for attempt in range(ATTEMPTS_PER_SIZE):
            attempts += 1
            rng = rng_for(seed, "hash", N, attempt)
            members = [
                {x for x in range(2**N) if rng.randrange(den) < num} for _ in range(n + 1)
            ]
            if not _ints_admissible(members, N, k, eps, delta):
                continue
            sets = tuple(
                CylinderSet.of(format(x, f"0{N}b") for x in m) for m in members
            )
            family = HashFamily(N, sets, k, delta, eps, hat, seed)
            if verify_hash_family(family) is not None:
                continue
            return family
    raise GenerationError(
        f"no admissible family up to {max_bits} ground bits",
        stats={"attempts": attempts, "max_bits": max_bits, "hat_epsilon": str(hat)},
    )
