"""
Letter distributions, the induced map F on them, and the iteration tau^n.

Retained masses are machine numbers computed with downward rounding. The
mass they do not account for (the slack) is always read as sitting on one
extreme letter, the sink: max for weak-code runs, which then over-estimate
every increasing set, min for strong-code runs, which under-estimate them.
Since F is monotone the one-sidedness survives any number of iterations.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, TextIO

import numpy as np

from app.config import N_MAX, SLACK_BOUND, STAGNATION_TOL
from fractalperc.alphabet import Alphabet
from fractalperc.errors import NumericBlowupError, ProfileError
from fractalperc.plan import CompositionPlan, PlanStep
from fractalperc.rounding import exact_sum, fraction_down, fraction_up, mul_down, sum_down
from fractalperc.wordcode import CodeKind

logger = logging.getLogger(__name__)

SINKS = ("max", "min")
TRAJECTORY_COLUMNS = ["n", "p", "upset_mass_pi", "mass_max", "slack"]


@dataclass
class LetterDistribution:
    """Retained per-letter masses plus the slack, read as sitting on the sink."""

    alphabet: Alphabet
    mass: np.ndarray
    sink: str = "max"

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=np.float64)
        if self.sink not in SINKS:
            raise ValueError(f"sink must be one of {SINKS}, got {self.sink!r}")
        if self.mass.shape != (len(self.alphabet),):
            raise ProfileError(f"{len(self.mass)} masses for an alphabet of {len(self.alphabet)} letters")
        if (self.mass < 0).any() or not np.isfinite(self.mass).all():
            raise ValueError("retained masses must be finite and non-negative")
        if self.slack < 0:
            raise ValueError(f"retained masses exceed 1 by {float(-self.slack)!r}")

    @classmethod
    def point(cls, alphabet: Alphabet, letter: str | int = "max", sink: str = "max") -> "LetterDistribution":
        """Point mass on min, max or a letter index."""
        index = {"max": alphabet.max_index, "min": alphabet.min_index}.get(letter, letter)
        mass = np.zeros(len(alphabet))
        mass[int(index)] = 1.0
        return cls(alphabet, mass, sink)

    @property
    def sink_index(self) -> int:
        return self.alphabet.max_index if self.sink == "max" else self.alphabet.min_index

    @property
    def slack(self) -> Fraction:
        return 1 - exact_sum(self.mass)

    def exact(self) -> list[Fraction]:
        """Retained masses with the slack placed on the sink, as exact rationals."""
        out = [Fraction(float(m)) for m in self.mass]
        out[self.sink_index] += self.slack
        return out

    def full(self) -> np.ndarray:
        """Machine vector with the slack (rounded down) placed on the sink."""
        out = self.mass.copy()
        i = self.sink_index
        out[i] = fraction_down(Fraction(float(out[i])) + self.slack)
        return out

    def mass_of(self, letter: int) -> float:
        return float(self.full()[letter])

    def __repr__(self) -> str:
        top = np.argsort(-self.mass)[:3]
        shown = ", ".join(f"{int(i)}:{self.mass[i]:.6g}" for i in top)
        return f"LetterDistribution({shown}, slack={float(self.slack):.3g}, sink={self.sink})"


@dataclass
class IterationConfig:
    p: float
    n_max: int = N_MAX
    sink: str = "max"
    early_stop: Callable[[int, LetterDistribution], bool] | None = None
    stagnation_tol: float | None = STAGNATION_TOL
    slack_bound: float = SLACK_BOUND

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p={self.p} outside [0, 1]")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if self.sink not in SINKS:
            raise ValueError(f"sink must be one of {SINKS}")


@dataclass
class IterationResult:
    final: LetterDistribution
    n: int
    stop_reason: str  # "early_stop", "stagnation" or "n_max"
    trajectory: list[dict] = field(default_factory=list)


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p={p} outside [0, 1]")


def _check_plan(plan: CompositionPlan, x: LetterDistribution) -> None:
    if plan.alphabet.checksum() != x.alphabet.checksum():
        raise ProfileError(f"distribution over {x.alphabet!r} pushed through plan over {plan.alphabet!r}")


def mix(x: LetterDistribution, p: float) -> LetterDistribution:
    """p*x + (1-p)*min, rounded down; lost mass joins the slack."""
    _check_p(p)
    if p == 1.0:
        return LetterDistribution(x.alphabet, x.full(), x.sink)
    y = mul_down(p, x.full())
    i = x.alphabet.min_index
    y[i] = fraction_down(Fraction(float(y[i])) + (1 - Fraction(p)))
    return LetterDistribution(x.alphabet, y, x.sink)


def _push_step(step: PlanStep, mass: np.ndarray, cell: np.ndarray) -> np.ndarray:
    eff = sum_down(cell[step.effect_letters], step.effect_index(), step.n_effects)
    contrib = mul_down(mass[step.src], eff[step.effect])
    return sum_down(contrib, step.dst, step.n_dst)


def _merge(branches: dict, quadrant, n: int) -> dict:
    out: dict = {}
    for key, mass in branches.items():
        rest = frozenset(kv for kv in key if kv[0] != quadrant)
        out.setdefault(rest, []).append(mass)
    merged = {}
    for key, parts in out.items():
        if len(parts) == 1:
            merged[key] = parts[0]
        else:
            merged[key] = sum_down(np.concatenate(parts), np.tile(np.arange(n), len(parts)), n)
    return merged


def _quadrant_spans(plan: CompositionPlan) -> tuple[dict, dict]:
    first: dict = {}
    last: dict = {}
    for i, s in enumerate(plan.steps):
        q = (s.row // 2, s.col // 2)
        first.setdefault(q, i)
        last[q] = i
    return first, last


def _push(plan: CompositionPlan, cell: np.ndarray, p: float | None) -> np.ndarray:
    """State masses after the last cell, summed into output letters."""
    n_letters = len(plan.alphabet)
    if plan.kind is not CodeKind.EMBEDDED_M2_VIA_4:
        mass = np.ones(1)
        for step in plan.steps:
            mass = _push_step(step, mass, cell)
        return sum_down(mass, plan.final_output, n_letters)

    # quadrant branching: each 2x2 quadrant survives with probability p, its
    # cells then follow mix(x, p); dead quadrants are filled with min
    dead = np.zeros(n_letters)
    dead[plan.alphabet.min_index] = 1.0
    alive_w = float(p)
    dead_w = fraction_down(1 - Fraction(p))
    first, last = _quadrant_spans(plan)
    branches: dict = {frozenset(): np.ones(1)}
    for i, step in enumerate(plan.steps):
        q = (step.row // 2, step.col // 2)
        if first[q] == i:
            split = {}
            for key, mass in branches.items():
                split[key | {(q, True)}] = mul_down(mass, alive_w)
                split[key | {(q, False)}] = mul_down(mass, dead_w)
            branches = split
        branches = {
            key: _push_step(step, mass, cell if (q, True) in key else dead)
            for key, mass in branches.items()
        }
        if last[q] == i:
            branches = _merge(branches, q, step.n_dst)
    (mass,) = branches.values()
    return sum_down(mass, plan.final_output, n_letters)


def apply_F(
    plan: CompositionPlan,
    x: LetterDistribution,
    p: float | None = None,
    slack_bound: float = SLACK_BOUND,
) -> LetterDistribution:
    """
    Push x through the plan: the law of the code of a word with i.i.d. cells.

    For the embedded 2-via-4x4 code, p is required and x is the law of the
    level-two subsquares; the result is the law two levels up.
    """
    _check_plan(plan, x)
    if plan.kind is CodeKind.EMBEDDED_M2_VIA_4:
        if p is None:
            raise ValueError("the embedded code needs the survival probability p")
        _check_p(p)
        cell = mix(x, p).full()
    else:
        cell = x.full()
    out = LetterDistribution(x.alphabet, _push(plan, cell, p), x.sink)
    if out.slack > slack_bound:
        logger.error("slack %.3g after one application exceeds %.3g", float(out.slack), slack_bound)
        raise NumericBlowupError(f"slack {float(out.slack)!r} exceeds sanity bound {slack_bound!r}")
    return out


def apply_F_exact(plan: CompositionPlan, x: Iterable[Fraction], p: Fraction | float | None = None) -> list[Fraction]:
    """Exact rational pushforward through the same plan; test oracle for small plans."""
    x = [Fraction(v) for v in x]
    n_letters = len(plan.alphabet)

    def mixed(v: list[Fraction], q: Fraction) -> list[Fraction]:
        out = [q * m for m in v]
        out[plan.alphabet.min_index] += 1 - q
        return out

    def step_exact(step: PlanStep, mass: list[Fraction], cell: list[Fraction]) -> list[Fraction]:
        offsets = step.effect_offsets.tolist()
        letters = step.effect_letters.tolist()
        eff = [sum((cell[a] for a in letters[offsets[e]:offsets[e + 1]]), Fraction(0)) for e in range(step.n_effects)]
        out = [Fraction(0)] * step.n_dst
        for s, e, d in zip(step.src.tolist(), step.effect.tolist(), step.dst.tolist()):
            if mass[s] and eff[e]:
                out[d] += mass[s] * eff[e]
        return out

    def finish(mass: list[Fraction]) -> list[Fraction]:
        res = [Fraction(0)] * n_letters
        for s, a in enumerate(plan.final_output.tolist()):
            res[a] += mass[s]
        return res

    if plan.kind is not CodeKind.EMBEDDED_M2_VIA_4:
        mass = [Fraction(1)]
        for step in plan.steps:
            mass = step_exact(step, mass, x)
        return finish(mass)

    q = Fraction(p)
    cell = mixed(x, q)
    dead = [Fraction(0)] * n_letters
    dead[plan.alphabet.min_index] = Fraction(1)
    first, last = _quadrant_spans(plan)
    branches: dict = {frozenset(): [Fraction(1)]}
    for i, step in enumerate(plan.steps):
        quad = (step.row // 2, step.col // 2)
        if first[quad] == i:
            split = {}
            for key, mass in branches.items():
                split[key | {(quad, True)}] = [q * m for m in mass]
                split[key | {(quad, False)}] = [(1 - q) * m for m in mass]
            branches = split
        branches = {
            key: step_exact(step, mass, cell if (quad, True) in key else dead)
            for key, mass in branches.items()
        }
        if last[quad] == i:
            merged: dict = {}
            for key, mass in branches.items():
                rest = frozenset(kv for kv in key if kv[0] != quad)
                if rest in merged:
                    merged[rest] = [a + b for a, b in zip(merged[rest], mass)]
                else:
                    merged[rest] = mass
            branches = merged
    (mass,) = branches.values()
    return finish(mass)


def upset_mass(x: LetterDistribution, S: Iterable[int] | np.ndarray, direction: str, check: bool = True) -> float:
    """
    Mass of the increasing set S under x with the slack on the sink.

    "upper" is a guaranteed over-estimate of the true mass and needs sink
    max; "lower" is a guaranteed under-estimate and needs sink min.
    """
    members = _members(x.alphabet, S)
    if check and not x.alphabet.is_upset(members.tolist()):
        raise ValueError("upset_mass needs an increasing set of letters")
    if direction == "upper" and x.sink != "max" or direction == "lower" and x.sink != "min":
        raise ValueError(f"a {direction} bound needs the slack on the {'max' if direction == 'upper' else 'min'} letter")
    total = exact_sum(x.mass[members])
    if x.sink_index in set(members.tolist()):
        total += x.slack
    return fraction_up(total) if direction == "upper" else fraction_down(total)


def _members(alphabet: Alphabet, S) -> np.ndarray:
    S = np.asarray(list(S) if not isinstance(S, np.ndarray) else S)
    if S.dtype == bool:
        return np.flatnonzero(S)
    return S.astype(np.intp)


def iterate_tau(plan: CompositionPlan, config: IterationConfig) -> IterationResult:
    """
    tau^0 is the point mass on max and tau^(k+1) = F(mix(tau^k, p)); the
    embedded code folds the survival mixing into F. Stops at n_max, on
    stagnation, or when the early-stop predicate fires.
    """
    alphabet = plan.alphabet
    pi = alphabet.pi_mask()
    x = LetterDistribution.point(alphabet, "max", config.sink)
    direction = "upper" if config.sink == "max" else "lower"
    trajectory = [_row(0, config.p, x, pi, direction)]
    reason = "n_max"
    n = 0
    for n in range(1, config.n_max + 1):
        if plan.kind is CodeKind.EMBEDDED_M2_VIA_4:
            nxt = apply_F(plan, x, config.p, config.slack_bound)
        else:
            nxt = apply_F(plan, mix(x, config.p), slack_bound=config.slack_bound)
        row = _row(n, config.p, nxt, pi, direction)
        if config.sink == "max" and row["upset_mass_pi"] > trajectory[-1]["upset_mass_pi"]:
            logger.warning(
                "over-estimate of the pi mass increased at n=%d (%.17g -> %.17g)",
                n, trajectory[-1]["upset_mass_pi"], row["upset_mass_pi"],
            )
        trajectory.append(row)
        change = float(np.max(np.abs(nxt.full() - x.full())))
        x = nxt
        if n % 50 == 0:
            logger.info("p=%.6g n=%d pi-mass=%.12g slack=%.3g", config.p, n, row["upset_mass_pi"], row["slack"])
        if config.early_stop is not None and config.early_stop(n, x):
            reason = "early_stop"
            break
        if config.stagnation_tol is not None and change < config.stagnation_tol:
            reason = "stagnation"
            break
    logger.debug("iteration at p=%.6g stopped after %d steps (%s)", config.p, n, reason)
    return IterationResult(final=x, n=n, stop_reason=reason, trajectory=trajectory)


def _row(n: int, p: float, x: LetterDistribution, pi: np.ndarray, direction: str) -> dict:
    return {
        "n": n,
        "p": p,
        "upset_mass_pi": upset_mass(x, pi, direction, check=False),
        "mass_max": float(x.mass[x.alphabet.max_index]),
        "slack": float(x.slack),
    }


def write_trajectory_csv(rows: Iterable[dict], out: str | Path | TextIO) -> None:
    """Columns n, p, upset_mass_pi, mass_max, slack; floats in round-trip precision."""
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            write_trajectory_csv(rows, fh)
        return
    writer = csv.DictWriter(out, fieldnames=TRAJECTORY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
