"""Closed forms and exact small-n enumerations.

Harmonic sums are exact rationals; the round budget and the sign law are
evaluated with :mod:`decimal` at 50 digits so neither ``n!`` nor long powers
lose precision. Exact laws over all ``n!`` decks are dense numpy vectors
(``n <= 6``); the strong-stationary-time checks run a dynamic program over
the augmented state ``(deck, rule state)`` for ``n <= 4``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import EpsilonOutOfRange, SizeTooLarge
from .randomness import BitSource
from .rules import RuleKind, check_pairing, make_rule
from .shuffles import Permutation, ShuffleKind, StepTrace, apply_step, random_permutation

__all__ = [
    "harmonic",
    "harmonic2",
    "KlzExpectation",
    "expected_klz_rtrt",
    "expected_mironov_rtrt",
    "SignLaw",
    "sign_distribution",
    "sign_distribution_iterative",
    "rounds_for_epsilon",
    "ExactDistribution",
    "exact_distribution",
    "exact_distributions",
    "separation",
    "tv",
    "SstDynamics",
    "sst_dynamics",
    "sst_tail_exact",
    "conditional_uniformity",
    "separation_bound_violations",
    "neighborhood_deviation",
    "OracleCheck",
    "oracle_checks",
    "AdvantageEstimate",
    "sign_adversary",
    "indistinguishability_advantage",
]

_PREC = 50
_PI = Decimal("3.14159265358979323846264338327950288419716939937510582097494")

MAX_DENSE_N = 6
MAX_AUGMENTED_N = 4


# -- harmonic numbers and expectations --------------------------------------


@lru_cache(maxsize=None)
def harmonic(n: int) -> Fraction:
    """H_n = 1 + 1/2 + ... + 1/n, exactly."""
    if n < 0:
        raise ValueError("n must be non-negative")
    total = Fraction(0)
    for k in range(1, n + 1):
        total += Fraction(1, k)
    return total


@lru_cache(maxsize=None)
def harmonic2(n: int) -> Fraction:
    """Second-order harmonic number, the sum of 1/k**2 for k <= n."""
    if n < 0:
        raise ValueError("n must be non-negative")
    total = Fraction(0)
    for k in range(1, n + 1):
        total += Fraction(1, k * k)
    return total


@dataclass(frozen=True)
class KlzExpectation:
    n: int
    mean: Fraction
    variance: Fraction
    phase1_mean: Fraction
    phase2_mean: Fraction
    asymptotic_mean: float  # n (H_n + 1)
    asymptotic_variance: float  # pi^2 n^2 / 4


def expected_klz_rtrt(n: int) -> KlzExpectation:
    """Exact mean and variance of the two-phase marking time on RTRT.

    The time is a sum of independent geometric holding times: with ``k``
    marked cards the next mark happens with probability ``(n-k)^2/n^2``
    while ``k < d`` and ``(n-k)(k+1)/n^2`` afterwards.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    d = n // 2
    nn = n * n
    p1 = [Fraction((n - k) ** 2, nn) for k in range(d)]
    p2 = [Fraction((n - k) * (k + 1), nn) for k in range(d, n)]
    m1 = sum((1 / p for p in p1), Fraction(0))
    m2 = sum((1 / p for p in p2), Fraction(0))
    var = sum(((1 - p) / (p * p) for p in p1 + p2), Fraction(0))
    return KlzExpectation(
        n=n,
        mean=m1 + m2,
        variance=var,
        phase1_mean=m1,
        phase2_mean=m2,
        asymptotic_mean=float(n * (harmonic(n) + 1)),
        asymptotic_variance=math.pi ** 2 * nn / 4,
    )


@dataclass(frozen=True)
class MironovExpectation:
    n: int
    mean: Fraction
    variance: Fraction
    asymptotic_mean: float  # 2 n H_n - n


def expected_mironov_rtrt(n: int) -> MironovExpectation:
    """Exact expectation of Mironov's checking time on RTRT (n >= 2)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    nn = n * n
    ps = [Fraction((n - k) * (k + 1), nn) for k in range(1, n)]
    mean = sum((1 / p for p in ps), Fraction(0))
    var = sum(((1 - p) / (p * p) for p in ps), Fraction(0))
    return MironovExpectation(n, mean, var, float(2 * n * harmonic(n) - n))


# -- sign distinguisher -----------------------------------------------------


@dataclass(frozen=True)
class SignLaw:
    n: int
    t: int
    p_plus: float
    p_minus: float
    exact_plus: Fraction | None = field(default=None, compare=False)

    @property
    def advantage(self) -> float:
        return abs(self.p_plus - 0.5)

    @property
    def log2_advantage(self) -> float:
        if self.exact_plus is not None:
            diff = abs(self.exact_plus - Fraction(1, 2))
            if diff == 0:
                return -math.inf
            return math.log2(diff.numerator) - math.log2(diff.denominator)
        return math.log2(self.advantage) if self.advantage else -math.inf

    def plus_decimal(self, digits: int = 16) -> str:
        """``p_plus`` as a correctly rounded decimal string."""
        assert self.exact_plus is not None
        return _fraction_to_decimal(self.exact_plus, digits)

    def minus_decimal(self, digits: int = 16) -> str:
        assert self.exact_plus is not None
        return _fraction_to_decimal(1 - self.exact_plus, digits)


def _fraction_to_decimal(x: Fraction, digits: int) -> str:
    with localcontext() as ctx:
        ctx.prec = max(_PREC, digits + 10)
        d = Decimal(x.numerator) / Decimal(x.denominator)
        return str(d.quantize(Decimal(1).scaleb(-digits)))


def sign_distribution(n: int, t: int) -> SignLaw:
    """Law of the sign after ``t`` CTRT steps from the identity.

    Each step keeps the sign with probability ``1/n``, giving
    ``p_plus = 1/2 + 1/2 (2/n - 1)^t``; the power is computed exactly.
    """
    if n < 1 or t < 0:
        raise ValueError("need n >= 1 and t >= 0")
    plus = Fraction(1, 2) + Fraction(1, 2) * Fraction(2 - n, n) ** t
    return SignLaw(n, t, float(plus), float(1 - plus), plus)


def sign_distribution_iterative(n: int, t: int) -> tuple[float, float]:
    """Oracle: push (1, 0) through the 2x2 sign-change matrix ``t`` times."""
    stay = 1.0 / n
    M = np.array([[stay, 1 - stay], [1 - stay, stay]])
    v = np.array([1.0, 0.0])
    for _ in range(t):
        v = v @ M
    return float(v[0]), float(v[1])


# -- round budget -----------------------------------------------------------


def rounds_for_epsilon(n: int, eps: float | str | Decimal) -> int:
    """RTRT steps after which every deck probability is within eps of 1/n!.

    ``r = ceil(n (H_n + 1) + (pi n / 2) / sqrt(n! eps))``, valid for
    ``0 < eps < 1/n!``. ``eps`` may be a string or Decimal so that values
    far below the float range (natural at large n) are usable.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    with localcontext() as ctx:
        ctx.prec = _PREC
        e = Decimal(str(eps)) if isinstance(eps, float) else Decimal(eps)
        if not e > 0:
            raise EpsilonOutOfRange(f"epsilon must lie in (0, 1/{n}!)")
        # compare log(eps) with -log(n!) before forming n! eps
        if e.ln() + Decimal(math.lgamma(n + 1)) >= Decimal("1e-9"):
            raise EpsilonOutOfRange(f"epsilon must lie in (0, 1/{n}!)")
        prod = Decimal(math.factorial(n)) * e
        if prod >= 1:
            raise EpsilonOutOfRange(f"epsilon must lie in (0, 1/{n}!)")
        h = harmonic(n)
        base = Decimal(n) * (Decimal(h.numerator) / Decimal(h.denominator) + 1)
        r = base + _PI * n / 2 / prod.sqrt()
    return int(r.to_integral_value(rounding="ROUND_CEILING"))


# -- exact laws over all decks ----------------------------------------------


@lru_cache(maxsize=None)
def _decks(n: int) -> tuple[tuple[tuple[int, ...], ...], dict]:
    decks = tuple(itertools.permutations(range(n)))
    return decks, {d: i for i, d in enumerate(decks)}


def _outcomes(kind: ShuffleKind, n: int, t: int) -> list[tuple[float, StepTrace]]:
    """Every possible trace of step ``t`` with its probability."""
    if kind is ShuffleKind.CYCLIC_TO_RANDOM:
        return [(1 / n, StepTrace(kind, t, t % n, j)) for j in range(n)]
    if kind is ShuffleKind.RANDOM_TRANSPOSITIONS:
        return [(1 / (n * n), StepTrace(kind, t, i, j)) for i in range(n) for j in range(n)]
    if kind is ShuffleKind.TOP_TO_RANDOM:
        return [(1 / n, StepTrace(kind, t, 0, j)) for j in range(n)]
    return [
        (0.5 ** n, StepTrace(kind, t, bits=bits))
        for bits in itertools.product((0, 1), repeat=n)
    ]


@lru_cache(maxsize=None)
def _kernel(kind: ShuffleKind, n: int, phase: int) -> tuple[np.ndarray, np.ndarray]:
    """(probabilities, next-deck index table of shape outcomes x decks)."""
    decks, index = _decks(n)
    outs = _outcomes(kind, n, phase)
    table = np.empty((len(outs), len(decks)), dtype=np.int64)
    for o, (_, trace) in enumerate(outs):
        for s, d in enumerate(decks):
            S = Permutation(d, check=False)
            apply_step(S, trace)
            table[o, s] = index[tuple(S.deck)]
    return np.array([p for p, _ in outs]), table


def _phase(kind: ShuffleKind, n: int, t: int) -> int:
    return t % n if kind is ShuffleKind.CYCLIC_TO_RANDOM else 0


def _push(law: np.ndarray, kind: ShuffleKind, n: int, t: int) -> np.ndarray:
    probs, table = _kernel(kind, n, _phase(kind, n, t))
    out = np.zeros_like(law)
    for p, row in zip(probs, table):
        out += p * np.bincount(row, weights=law, minlength=law.size)
    return out


@dataclass
class ExactDistribution:
    n: int
    k: int
    probs: np.ndarray
    decks: tuple[tuple[int, ...], ...]

    def prob(self, deck) -> float:
        return float(self.probs[_decks(self.n)[1][tuple(deck)]])


def _identity_law(n: int) -> np.ndarray:
    decks, index = _decks(n)
    law = np.zeros(len(decks))
    law[index[tuple(range(n))]] = 1.0
    return law


def exact_distribution(kind: ShuffleKind | str, n: int, k: int) -> ExactDistribution:
    """Law of the deck after ``k`` steps from the identity (``n <= 6``)."""
    kind = ShuffleKind.parse(kind)
    if n > MAX_DENSE_N:
        raise SizeTooLarge(f"dense enumeration supports n <= {MAX_DENSE_N}")
    law = _identity_law(n)
    for t in range(k):
        law = _push(law, kind, n, t)
    return ExactDistribution(n, k, law, _decks(n)[0])


def exact_distributions(kind: ShuffleKind | str, n: int, k_max: int) -> list[ExactDistribution]:
    """Laws for every step count ``0..k_max`` in one pass."""
    kind = ShuffleKind.parse(kind)
    if n > MAX_DENSE_N:
        raise SizeTooLarge(f"dense enumeration supports n <= {MAX_DENSE_N}")
    law = _identity_law(n)
    out = [ExactDistribution(n, 0, law, _decks(n)[0])]
    for t in range(k_max):
        law = _push(law, kind, n, t)
        out.append(ExactDistribution(n, t + 1, law, _decks(n)[0]))
    return out


def separation(dist: ExactDistribution) -> float:
    """max over decks of 1 - n! Pr(deck)."""
    return float(np.max(1.0 - dist.probs.size * dist.probs))


def tv(dist: ExactDistribution) -> float:
    return float(0.5 * np.abs(dist.probs - 1.0 / dist.probs.size).sum())


# -- strong stationary time dynamic program ---------------------------------


@dataclass
class SstDynamics:
    """Exact joint law of (T, X_T) and the tail Pr(T > k).

    ``stop_law[t][s]`` is Pr(T = t, deck = decks[s]); ``tail[k]`` is
    Pr(T > k). The program runs until the tail drops below ``tail_target``
    or ``max_steps`` is reached.
    """

    kind: ShuffleKind
    rule: RuleKind
    n: int
    stop_law: list[np.ndarray]
    tail: list[float]

    def mass(self, t: int) -> float:
        return float(self.stop_law[t].sum())

    def conditional_deviation(self) -> float:
        """max over reachable t and decks of |Pr(deck | T = t) - 1/n!|."""
        worst = 0.0
        for law in self.stop_law:
            m = law.sum()
            if m > 0:
                worst = max(worst, float(np.max(np.abs(law / m - 1.0 / law.size))))
        return worst

    def stopped_law(self) -> np.ndarray:
        """Pr(deck at stopping), renormalised over the computed horizon."""
        total = np.sum(self.stop_law, axis=0)
        return total / total.sum()


def sst_dynamics(
    kind: ShuffleKind | str,
    rule: RuleKind | str,
    n: int,
    tail_target: float = 1e-6,
    max_steps: int | None = None,
) -> SstDynamics:
    kind = ShuffleKind.parse(kind)
    rule = RuleKind.parse(rule)
    check_pairing(kind, rule)
    if n > MAX_AUGMENTED_N:
        raise SizeTooLarge(f"augmented-state DP supports n <= {MAX_AUGMENTED_N}")
    decks, index = _decks(n)
    size = len(decks)
    r0 = make_rule(rule, n)
    id_idx = index[tuple(range(n))]
    first = np.zeros(size)
    if r0.stopped:
        first[id_idx] = 1.0
        return SstDynamics(kind, rule, n, [first], [0.0])
    stop_law = [first]
    tail = [1.0]
    # live states: (deck index, rule key) -> [probability, rule object]
    live: dict[tuple, list] = {(id_idx, r0.key()): [1.0, r0]}
    t = 0
    while tail[-1] >= tail_target and (max_steps is None or t < max_steps):
        outs = _outcomes(kind, n, t)
        _, table = _kernel(kind, n, _phase(kind, n, t))
        nxt: dict[tuple, list] = {}
        stopped = np.zeros(size)
        for (s, _), (p, r) in live.items():
            S = Permutation(decks[s], check=False)
            for o, (q, trace) in enumerate(outs):
                rr = r.copy()
                done = rr.update(trace, S)
                s2 = int(table[o, s])
                w = p * q
                if done:
                    stopped[s2] += w
                else:
                    key = (s2, rr.key())
                    slot = nxt.get(key)
                    if slot is None:
                        nxt[key] = [w, rr]
                    else:
                        slot[0] += w
        live = nxt
        t += 1
        stop_law.append(stopped)
        tail.append(float(sum(v[0] for v in live.values())))
    return SstDynamics(kind, rule, n, stop_law, tail)


def sst_tail_exact(kind: ShuffleKind | str, rule: RuleKind | str, n: int, k: int) -> float:
    """Pr(T > k) by exact dynamic programming."""
    return sst_dynamics(kind, rule, n, tail_target=0.0, max_steps=k).tail[k]


def conditional_uniformity(kind: ShuffleKind | str, rule: RuleKind | str, n: int,
                           tail_target: float = 1e-6) -> float:
    return sst_dynamics(kind, rule, n, tail_target).conditional_deviation()


def separation_bound_violations(dyn: SstDynamics, slack: float = 1e-12) -> list[tuple[int, float, float]]:
    """Steps k where sep(L(X_k)) exceeds Pr(T > k); empty when the bound holds."""
    laws = exact_distributions(dyn.kind, dyn.n, len(dyn.tail) - 1)
    bad = []
    for k, tail in enumerate(dyn.tail):
        sep = separation(laws[k])
        if sep > tail + slack:
            bad.append((k, sep, tail))
    return bad


def neighborhood_deviation(dist: ExactDistribution) -> tuple[float, float]:
    """``(max |Pr(deck) - 1/n!|, sep)`` for one exact law.

    A separation of ``eps`` bounds the deviation by ``eps (n! - 1) / n!``
    (all mass missing below 1/n! may pile onto one deck), not by the
    tighter ``eps / n!``.
    """
    dev = float(np.max(np.abs(dist.probs - 1.0 / dist.probs.size)))
    return dev, separation(dist)


@dataclass(frozen=True)
class OracleCheck:
    kind: ShuffleKind
    rule: RuleKind
    n: int
    deviation: float
    bound_violations: int
    steps: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.deviation < self.tolerance and self.bound_violations == 0


def oracle_checks(ns=(3, 4), tail_target: float = 1e-6, tolerance: float = 1e-10) -> list[OracleCheck]:
    """Exact strong-stationarity checks for every valid (chain, rule) pair."""
    from .rules import VALID_PAIRS

    out = []
    for n in ns:
        for kind, rules in VALID_PAIRS.items():
            for rule in sorted(rules, key=lambda r: r.value):
                dyn = sst_dynamics(kind, rule, n, tail_target)
                out.append(OracleCheck(
                    kind, rule, n, dyn.conditional_deviation(),
                    len(separation_bound_violations(dyn)), len(dyn.tail) - 1, tolerance,
                ))
    return out


# -- indistinguishability experiment ----------------------------------------


@dataclass(frozen=True)
class AdvantageEstimate:
    advantage: float
    stderr: float
    p_real: float
    p_ideal: float
    trials: int


def sign_adversary(t: int) -> Callable[[Permutation], bool]:
    """Guess "not the shuffle" exactly when sign(deck) == (-1)^t."""
    expected = -1 if t & 1 else 1
    return lambda deck: deck.sign() != expected


def indistinguishability_advantage(
    sampler: Callable[[BitSource], Permutation],
    adversary: Callable[[Permutation], bool],
    trials: int,
    seed: int = 0,
    n: int | None = None,
    ideal: Callable[[BitSource], Permutation] | None = None,
) -> AdvantageEstimate:
    """Monte-Carlo estimate of |Pr[A(S(K)) = 1] - Pr[A(R) = 1]|.

    ``sampler`` maps a fresh bit source to a deck; the ideal side draws
    uniform decks by Fisher-Yates unless ``ideal`` is given (``n`` is then
    not needed).
    """
    if ideal is None:
        if n is None:
            raise ValueError("n is required for the uniform reference")
        ideal = lambda src: random_permutation(n, src)  # noqa: E731
    real_hits = sum(bool(adversary(sampler(BitSource.from_seed(seed, 0, i)))) for i in range(trials))
    ideal_hits = sum(bool(adversary(ideal(BitSource.from_seed(seed, 1, i)))) for i in range(trials))
    p1 = real_hits / trials
    p0 = ideal_hits / trials
    stderr = math.sqrt(p1 * (1 - p1) / trials + p0 * (1 - p0) / trials)
    return AdvantageEstimate(abs(p1 - p0), stderr, p1, p0, trials)
