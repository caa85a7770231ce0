"""
Bound certification and search.

Lower bounds: a weak-code run with the slack on max over-estimates the
probability that two sides are connected; once that over-estimate drops
below a rigorous lower bound for the square-lattice site threshold, p is
below p_c(M). Upper bounds: a strong-family code run with the slack on min
under-estimates F(mix(x, p)); a coupling showing it dominates x puts p
above p_c(M).
"""
from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

from pydantic import BaseModel, field_validator

from app.config import (
    FRACTAL_CACHE_DIR,
    N_MAX,
    SEARCH_DELTA,
    SITE_CONSTANT,
    SITE_CONSTANT_DEFAULT,
    STAGNATION_TOL,
    THREADS,
)
from fractalperc.alphabet import Alphabet, BoundaryProfile, encode, enumerate_alphabet, two_letter
from fractalperc.certificate import Certificate, CouplingEntry, Refusal
from fractalperc.dominance import dominates
from fractalperc.iterate import (
    IterationConfig,
    LetterDistribution,
    apply_F,
    iterate_tau,
    mix,
    upset_mass,
)
from fractalperc.plan import CompositionPlan, build_plan
from fractalperc.rounding import as_ratio, fraction_down, fraction_up, sqrt_up
from fractalperc.wordcode import CodeKind

logger = logging.getLogger(__name__)


class SiteConstant(BaseModel):
    """Rigorous lower bound for the site percolation threshold; overridable downward only."""

    value: float = SITE_CONSTANT_DEFAULT

    @field_validator("value")
    @classmethod
    def _downward_only(cls, v: float) -> float:
        if not 0.0 < v <= SITE_CONSTANT_DEFAULT:
            raise ValueError(f"site constant {v} must lie in (0, {SITE_CONSTANT_DEFAULT}]")
        return v


@dataclass
class CertifyConfig:
    n_max: int = N_MAX
    stagnation_tol: float | None = STAGNATION_TOL
    site_constant: SiteConstant = field(default_factory=lambda: SiteConstant(value=SITE_CONSTANT))
    code: CodeKind | None = None  # default: weak for lower runs, strong for upper runs
    two_letter: bool = False
    search_delta: float = SEARCH_DELTA
    threads: int = THREADS
    cache_dir: Path = FRACTAL_CACHE_DIR
    use_cache: bool = True
    run: dict = field(default_factory=dict)  # validated command parameters, for provenance

    def provenance(self) -> dict:
        return {
            "n_max": self.n_max,
            "stagnation_tol": self.stagnation_tol,
            "site_constant": self.site_constant.value,
            "code": self.code.value if self.code else None,
            "two_letter": self.two_letter,
            "search_delta": self.search_delta,
            "run": self.run,
        }


_plans: dict[tuple, CompositionPlan] = {}
_plans_lock = threading.Lock()


def get_plan(M: int, profile: BoundaryProfile, kind: CodeKind, two: bool, config: CertifyConfig) -> CompositionPlan:
    """Alphabet and plan for a run, memoized per process."""
    key = (M, profile, kind, two, str(config.cache_dir))
    with _plans_lock:
        if key not in _plans:
            alphabet: Alphabet = two_letter(profile) if two else enumerate_alphabet(profile)
            _plans[key] = build_plan(alphabet, M, kind, cache_dir=config.cache_dir, use_cache=config.use_cache)
        return _plans[key]


def _lower_kind(config: CertifyConfig) -> CodeKind:
    kind = config.code or CodeKind.WEAK
    if kind is not CodeKind.WEAK:
        raise ValueError(f"lower bounds need the weak code, got {kind.value}")
    return kind


def _upper_kind(config: CertifyConfig) -> tuple[CodeKind, bool]:
    kind = config.code or (CodeKind.STRONG_ALL_SIDES if config.two_letter else CodeKind.STRONG)
    if kind is CodeKind.WEAK:
        raise ValueError("upper bounds need a strong-family code")
    return kind, kind is CodeKind.STRONG_ALL_SIDES


def certify_lower(M: int, profile: BoundaryProfile, p: float, config: CertifyConfig | None = None) -> Certificate | Refusal:
    """Certificate of p < p_c(M), or a refusal when n_max runs out first."""
    config = config or CertifyConfig()
    kind = _lower_kind(config)
    plan = get_plan(M, profile, kind, config.two_letter, config)
    pi = plan.alphabet.pi_mask()
    constant = config.site_constant.value

    def below(n: int, x: LetterDistribution) -> bool:
        return upset_mass(x, pi, "upper", check=False) < constant

    result = iterate_tau(
        plan,
        IterationConfig(p=p, n_max=config.n_max, sink="max", early_stop=below, stagnation_tol=config.stagnation_tol),
    )
    estimate = result.trajectory[-1]["upset_mass_pi"]
    common = dict(M=M, profile=list(profile.counts), code=plan.kind.value)
    if result.stop_reason != "early_stop":
        logger.warning("no lower certificate at p=%.6g: pi over-estimate %.12g after %d steps (%s)",
                       p, estimate, result.n, result.stop_reason)
        return Refusal(
            kind="lower", p=p, reason=f"pi over-estimate stayed >= {constant}", iterations=result.n,
            stop_reason=result.stop_reason, last_estimate=estimate, config=config.provenance(), **common,
        )
    logger.info("certified p=%.6g < p_c(%d) at n=%d (pi <= %.12g)", p, M, result.n, estimate)
    return Certificate(
        kind="lower", p=as_ratio(p), p_float=repr(p), iterations=result.n, stop_reason=result.stop_reason,
        rounding="downward, slack on max", pi_upper=as_ratio(estimate), site_constant=as_ratio(constant),
        alphabet_sha256=plan.alphabet.checksum(), table_sha256=plan.sha256(), config=config.provenance(), **common,
    ).sealed()


def image_of(plan: CompositionPlan, x: LetterDistribution, p: float) -> LetterDistribution:
    """Under-estimate of F(mix(x, p)); the embedded code mixes inside F."""
    if plan.kind is CodeKind.EMBEDDED_M2_VIA_4:
        return apply_F(plan, x, p)
    return apply_F(plan, mix(x, p))


def certify_upper(
    M: int,
    profile: BoundaryProfile,
    p: float,
    x: LetterDistribution | None = None,
    config: CertifyConfig | None = None,
    iterations: int = 0,
    stop_reason: str = "given",
) -> Certificate | Refusal:
    """Certificate of p > p_c(M) from F(mix(x, p)) dominating x, or a refusal."""
    config = config or CertifyConfig()
    kind, two = _upper_kind(config)
    plan = get_plan(M, profile, kind, two, config)
    common = dict(M=M, profile=list(profile.counts), code=plan.kind.value)
    if x is None:
        x = LetterDistribution.point(plan.alphabet, "max", sink="min")
    if x.sink != "min":
        x = LetterDistribution(x.alphabet, x.mass, "min")
    X = x.exact()
    x_max = X[plan.alphabet.max_index]
    if x_max <= 0:
        return Refusal(kind="upper", p=p, reason="x has no mass on max", iterations=iterations,
                       stop_reason=stop_reason, config=config.provenance(), **common)
    image = image_of(plan, x, p)
    witness = dominates(image, X, plan.alphabet)
    if witness is None:
        logger.warning("no upper certificate at p=%.6g: image does not dominate x", p)
        return Refusal(kind="upper", p=p, reason="F(mix(x, p)) does not dominate x", iterations=iterations,
                       stop_reason=stop_reason, last_estimate=float(image.mass[plan.alphabet.max_index]),
                       config=config.provenance(), **common)
    letters = [encode(a) for a in plan.alphabet.letters]
    logger.info("certified p=%.6g > p_c(%d) with %d coupling entries", p, M, len(witness.gamma))
    return Certificate(
        kind="upper", p=as_ratio(p), p_float=repr(p), iterations=iterations, stop_reason=stop_reason,
        rounding="downward, slack on min", letters=letters, x=[as_ratio(v) for v in X],
        image=[as_ratio(v) for v in witness.upper],
        witness=[CouplingEntry(upper=letters[a], lower=letters[b], weight=as_ratio(w))
                 for (a, b), w in sorted(witness.gamma.items())],
        x_max=as_ratio(x_max), alphabet_sha256=plan.alphabet.checksum(), table_sha256=plan.sha256(),
        config=config.provenance(), **common,
    ).sealed()


def fixed_point_candidate(M: int, profile: BoundaryProfile, q: float, config: CertifyConfig):
    """tau^n(q) of the upper-bound code, slack on min."""
    kind, two = _upper_kind(config)
    plan = get_plan(M, profile, kind, two, config)
    return iterate_tau(
        plan, IterationConfig(p=q, n_max=config.n_max, sink="min", stagnation_tol=config.stagnation_tol)
    )


def certify_upper_from(M: int, profile: BoundaryProfile, p: float, config: CertifyConfig | None = None) -> Certificate | Refusal:
    """certify_upper with x = tau^n(p - delta)."""
    config = config or CertifyConfig()
    if p == 1.0:
        return certify_upper(M, profile, p, None, config)
    q = p - config.search_delta
    if q <= 0.0:
        kind, _ = _upper_kind(config)
        return Refusal(kind="upper", M=M, profile=list(profile.counts), code=kind.value, p=p,
                       reason=f"p - delta = {q} leaves no survival probability", config=config.provenance())
    result = fixed_point_candidate(M, profile, q, config)
    return certify_upper(M, profile, p, result.final, config, result.n, result.stop_reason)


# ---------------------------------------------------------------------------
# search

@dataclass
class SearchResult:
    best: float | None  # best certified grid point
    certificate: Certificate | None
    bracket: float | None  # nearest refused grid point on the other side
    refusal: Refusal | None = None
    tried: dict[float, bool] = field(default_factory=dict)


def _grid_search(
    attempt: Callable[[float], Certificate | Refusal],
    precision: float,
    lo: float,
    hi: float,
    certified_below: bool,
    threads: int,
) -> SearchResult:
    """
    Bisection over the grid lo + k*precision. certified_below says which
    side of the threshold certifies; several grid points per round when threads > 1.
    """
    if precision <= 0:
        raise ValueError("precision must be positive")
    n = max(1, round((hi - lo) / precision))
    grid = [min(hi, lo + k * precision) for k in range(n + 1)]
    cache: dict[int, Certificate | Refusal] = {}

    def run(indices: list[int]) -> None:
        todo = [i for i in indices if i not in cache]
        if threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=min(threads, len(todo))) as ex:
                for i, out in zip(todo, ex.map(lambda i: attempt(grid[i]), todo)):
                    cache[i] = out
        else:
            for i in todo:
                cache[i] = attempt(grid[i])
        for i in todo:
            logger.info("p=%.6g: %s", grid[i], "certified" if ok(i) else "refused")

    def ok(i: int) -> bool:
        return isinstance(cache[i], Certificate)

    good, bad = (0, n) if certified_below else (n, 0)
    run([good, bad])
    if not ok(good):
        return _result(grid, cache, None, good)
    if ok(bad):
        return _result(grid, cache, bad, None)
    while abs(bad - good) > 1:
        span = bad - good
        k = max(1, min(threads, abs(span) - 1))
        step = span / (k + 1)
        points = sorted({good + round(step * j) for j in range(1, k + 1)} - {good, bad})
        run(points)
        ordered = points if certified_below else points[::-1]
        for i in ordered:
            if ok(i):
                good = i
            else:
                bad = i
                break
    return _result(grid, cache, good, bad)


def _result(grid, cache, good: int | None, bad: int | None) -> SearchResult:
    tried = {grid[i]: isinstance(v, Certificate) for i, v in cache.items()}
    return SearchResult(
        best=grid[good] if good is not None else None,
        certificate=cache[good] if good is not None else None,
        bracket=grid[bad] if bad is not None else None,
        refusal=cache[bad] if bad is not None else None,
        tried=tried,
    )


def search_lower(
    M: int, profile: BoundaryProfile, precision: float, config: CertifyConfig | None = None,
    lo: float = 0.0, hi: float = 1.0,
) -> SearchResult:
    """Largest certified p on the grid: a rigorous lower bound for p_c(M)."""
    config = config or CertifyConfig()
    return _grid_search(lambda p: certify_lower(M, profile, p, config), precision, lo, hi, True, config.threads)


def search_upper(
    M: int, profile: BoundaryProfile, precision: float, config: CertifyConfig | None = None,
    lo: float = 0.0, hi: float = 1.0,
) -> SearchResult:
    """Smallest certified p on the grid: a rigorous upper bound for p_c(M)."""
    config = config or CertifyConfig()
    return _grid_search(lambda p: certify_upper_from(M, profile, p, config), precision, lo, hi, False, config.threads)


def baseline_bounds(M: int, p_c4_upper: float | None = None) -> tuple[float, float | None]:
    """1/sqrt(M) rounded down, and for M=2 the bound 1-(1-sqrt(b))^4 rounded up from p_c(4) <= b."""
    if M < 2:
        raise ValueError("M must be at least 2")
    lower = fraction_down(1 / Fraction(sqrt_up(float(M))))
    upper = None
    if M == 2 and p_c4_upper is not None:
        if not 0.0 <= p_c4_upper <= 1.0:
            raise ValueError("p_c(4) bound must lie in [0, 1]")
        s = Fraction(min(sqrt_up(p_c4_upper), 1.0))
        upper = fraction_up(1 - (1 - s) ** 4)
    return lower, upper
