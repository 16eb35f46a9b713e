"""Monte-Carlo harness for stopping-time statistics, the sign law and bit budgets.

Every trial draws from its own stream ``BitSource.from_seed(seed, trial)``,
so a report depends only on the configuration and never on how trials are
split across worker processes. Aggregates are exact integer sums and a
width-1 histogram, which makes merging partial results order-independent.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .randomness import BitSource
from .rules import RuleKind, check_pairing
from .sampler import Scheme, ksa_double_star
from .shuffles import ShuffleKind

__all__ = [
    "TrialConfig",
    "SimulationReport",
    "run_trials",
    "SignEstimate",
    "sign_empirical",
    "BudgetRow",
    "bit_budget_table",
    "riffle_codes_distinct",
    "minimal_run_frequency",
    "count_minimal_tapes",
    "reports_to_csv",
]


@dataclass(frozen=True)
class TrialConfig:
    kind: ShuffleKind
    rule: RuleKind
    n: int
    trials: int = 10_000
    seed: int = 0
    parallelism: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", ShuffleKind.parse(self.kind))
        object.__setattr__(self, "rule", RuleKind.parse(self.rule))
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "rule": self.rule.value,
            "n": self.n,
            "trials": self.trials,
            "seed": self.seed,
        }


@dataclass
class _Partial:
    count: int = 0
    sum_steps: int = 0
    sum_sq: int = 0
    sum_bits: int = 0
    hist: Counter = field(default_factory=Counter)

    def merge(self, other: _Partial) -> None:
        self.count += other.count
        self.sum_steps += other.sum_steps
        self.sum_sq += other.sum_sq
        self.sum_bits += other.sum_bits
        self.hist.update(other.hist)


@dataclass
class SimulationReport:
    config: TrialConfig
    trials: int
    mean_steps: float
    var_steps: float
    mean_bits: float
    histogram: dict[int, int]
    wall_time: float = 0.0

    @property
    def stderr(self) -> float:
        return math.sqrt(self.var_steps / self.trials)

    def to_dict(self, timing: bool = False) -> dict:
        """Plain-data view; timing and worker count are left out unless asked,
        so the default JSON is byte-identical across runs and worker counts."""
        out = {
            "config": self.config.to_dict(),
            "trials": self.trials,
            "mean_steps": self.mean_steps,
            "var_steps": self.var_steps,
            "mean_bits": self.mean_bits,
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
        }
        if timing:
            out["run"] = {"wall_time": self.wall_time, "workers": self.config.parallelism}
        return out

    def to_json(self, timing: bool = False) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True)


def _run_range(kind: ShuffleKind, rule: RuleKind, n: int, seed: int, lo: int, hi: int) -> _Partial:
    acc = _Partial()
    for trial in range(lo, hi):
        res = ksa_double_star(kind, rule, n, BitSource.from_seed(seed, trial))
        acc.count += 1
        acc.sum_steps += res.steps
        acc.sum_sq += res.steps * res.steps
        acc.sum_bits += res.bits_used
        acc.hist[res.steps] += 1
    return acc


def run_trials(cfg: TrialConfig) -> SimulationReport:
    """Run ``cfg.trials`` independent stopping-rule samples and summarize T."""
    check_pairing(cfg.kind, cfg.rule)
    start = time.perf_counter()
    total = _Partial()
    workers = min(cfg.parallelism, cfg.trials)
    if workers == 1:
        total = _run_range(cfg.kind, cfg.rule, cfg.n, cfg.seed, 0, cfg.trials)
    else:
        chunk = -(-cfg.trials // (4 * workers))
        bounds = [(lo, min(lo + chunk, cfg.trials)) for lo in range(0, cfg.trials, chunk)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_range, cfg.kind, cfg.rule, cfg.n, cfg.seed, lo, hi)
                for lo, hi in bounds
            ]
            for fut in futures:
                total.merge(fut.result())
    m = total.count
    mean = Fraction(total.sum_steps, m)
    # unbiased variance from exact integer sums
    var = Fraction(total.sum_sq * m - total.sum_steps**2, m * (m - 1)) if m > 1 else Fraction(0)
    return SimulationReport(
        config=cfg,
        trials=m,
        mean_steps=float(mean),
        var_steps=float(var),
        mean_bits=float(Fraction(total.sum_bits, m)),
        histogram=dict(sorted(total.hist.items())),
        wall_time=time.perf_counter() - start,
    )


def reports_to_csv(reports: list[SimulationReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "rule", "n", "trials", "seed", "mean_steps", "var_steps", "mean_bits"])
    for r in reports:
        c = r.config
        w.writerow([c.kind.value, c.rule.value, c.n, r.trials, c.seed,
                    f"{r.mean_steps:.2f}", f"{r.var_steps:.2f}", f"{r.mean_bits:.2f}"])
    return buf.getvalue()


# -- sign law ----------------------------------------------------------------


@dataclass(frozen=True)
class SignEstimate:
    n: int
    t: int
    trials: int
    p_plus: float
    stderr: float


def _ctrt_batch(n: int, t: int, rows: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """``rows`` decks after ``t`` cyclic-to-random steps, plus their parities."""
    decks = np.tile(np.arange(n, dtype=np.int32), (rows, 1))
    parity = np.zeros(rows, dtype=np.int8)
    ar = np.arange(rows)
    for step in range(t):
        i = step % n
        j = rng.integers(0, n, size=rows)
        a = decks[:, i].copy()
        decks[:, i] = decks[ar, j]
        decks[ar, j] = a
        # a transposition of two distinct positions flips the sign
        parity ^= (j != i).astype(np.int8)
    return decks, parity


def sign_empirical(n: int, t: int, trials: int, seed: int = 0, batch: int = 20_000) -> SignEstimate:
    """Fraction of even decks after ``t`` CTRT steps from the identity."""
    if t < 0:
        raise ValueError("t must be non-negative")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    even = 0
    done = 0
    while done < trials:
        rows = min(batch, trials - done)
        _, parity = _ctrt_batch(n, t, rows, rng)
        even += int(rows - parity.sum())
        done += rows
    p = even / trials
    return SignEstimate(n, t, trials, p, math.sqrt(p * (1 - p) / trials))


# -- bit budgets -------------------------------------------------------------


@dataclass(frozen=True)
class BudgetRow:
    scheme: str
    n: int
    trials: int
    mean_steps: float
    mean_bits: float


_BUDGET_SCHEMES = (
    ("Mironov-CTRT", Scheme.CTRT_MIRONOV),
    ("KLZ-CTRT", Scheme.CTRT_KLZ),
    ("RiffleSST", Scheme.RIFFLE_SST),
)


def bit_budget_table(n: int, trials: int = 10_000, seed: int = 0, workers: int = 1) -> list[BudgetRow]:
    rows = []
    for name, scheme in _BUDGET_SCHEMES:
        if scheme is Scheme.RIFFLE_SST and n & (n - 1):
            raise ValueError("the riffle row needs n to be a power of two")
        rep = run_trials(TrialConfig(scheme.kind, scheme.rule, n, trials, seed, workers))
        rows.append(BudgetRow(name, n, trials, rep.mean_steps, rep.mean_bits))
    return rows


# -- shortest riffle runs ----------------------------------------------------


def riffle_codes_distinct(bits: np.ndarray) -> np.ndarray:
    """Run inverse-riffle rounds on a batch and report full separation.

    ``bits`` has shape ``(batch, rounds, n)``; round ``s`` assigns
    ``bits[:, s, p]`` to the card at position ``p``. Returns a boolean per row
    telling whether every pair of cards received different bits at some round,
    i.e. whether the pair-separation rule has stopped after these rounds.
    """
    batch, rounds, n = bits.shape
    decks = np.tile(np.arange(n, dtype=np.int64), (batch, 1))
    codes = np.zeros((batch, n), dtype=np.int64)
    for s in range(rounds):
        b = bits[:, s, :].astype(np.int64)
        # code of the card at each position, extended by this round's bit
        at_pos = np.take_along_axis(codes, decks, axis=1) * 2 + b
        np.put_along_axis(codes, decks, at_pos, axis=1)
        order = np.argsort(b, axis=1, kind="stable")
        decks = np.take_along_axis(decks, order, axis=1)
    srt = np.sort(codes, axis=1)
    return np.all(srt[:, 1:] != srt[:, :-1], axis=1)


def minimal_run_frequency(n: int, trials: int, seed: int = 0, batch: int = 500_000) -> tuple[int, float]:
    """How often the riffle rule stops after exactly ``lg n`` rounds.

    Only the first ``lg n`` rounds matter (the rule cannot stop earlier), so
    each trial costs ``n lg n`` random bits. Returns ``(hits, frequency)``.
    """
    if n < 2 or n & (n - 1):
        raise ValueError("n must be a power of two >= 2")
    k = n.bit_length() - 1
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    hits = 0
    done = 0
    while done < trials:
        rows = min(batch, trials - done)
        bits = rng.integers(0, 2, size=(rows, k, n), dtype=np.uint8)
        hits += int(riffle_codes_distinct(bits).sum())
        done += rows
    return hits, hits / trials


def count_minimal_tapes(n: int, batch: int = 1 << 18) -> int:
    """Exhaustively count the ``n lg n``-bit tapes that stop in ``lg n`` rounds."""
    if n < 2 or n & (n - 1):
        raise ValueError("n must be a power of two >= 2")
    k = n.bit_length() - 1
    width = n * k
    if width > 32:
        raise ValueError("tape space too large to enumerate")
    shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
    total = 0
    for lo in range(0, 1 << width, batch):
        tapes = np.arange(lo, min(lo + batch, 1 << width), dtype=np.uint64)
        bits = ((tapes[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
        total += int(riffle_codes_distinct(bits.reshape(-1, k, n)).sum())
    return total
