"""Closed-form losses and security bounds for hybrid, noisy and bounded-depth adversaries.

Every function is pure and returns an :class:`ExactValue`. Binomials with an
upper index smaller than the lower index are zero (``math.comb`` already
follows that convention).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import jsonschema

from .exact import ExactValue

# rational upper bound on e**2 = 7.389056...
E_SQUARED_UPPER = Fraction(739, 100)


class ZeroMass(ValueError):
    """The reprogramming distribution has no mass (A_{k,q,c} = 0)."""


class IndivisibleBudget(ValueError):
    pass


class DomainExhausted(ValueError):
    pass


class Tag(str, enum.Enum):
    """Which result a bound entry instantiates."""

    HYBRID_REPROGRAM = "hybrid-reprogram"
    HYBRID_REPROGRAM_SIMPLIFIED = "hybrid-reprogram-simplified"
    QUANTUM_MEASURE_REPROGRAM = "quantum-measure-reprogram"
    NOISY_REPROGRAM_EXACT = "noisy-reprogram-exact"
    NOISY_REPROGRAM_ASYMPTOTIC = "noisy-reprogram-asymptotic"
    BOUNDED_DEPTH = "bounded-depth"
    IMAGE_LIFTING = "image-lifting"
    DIRECT_PRODUCT = "direct-product"
    ADVICE = "non-uniform-advice"
    SALTING = "salting"
    MULTI_IMAGE_ALGORITHM = "multi-image-algorithm"
    HYBRID_SEARCH_FLOOR = "hybrid-search-floor"
    P_OF_R = "p-of-r"


@dataclass(frozen=True)
class Params:
    k: int = 1
    q: int = 0
    c: int = 0
    T: int = 0
    p: Fraction = Fraction(0)
    d: int = 1
    bigN: int = 1
    bigM: int = 1
    S: int = 0
    bigK: int = 1
    g: int = 1

    def __post_init__(self):
        object.__setattr__(self, "p", Fraction(self.p))
        if self.k < 1:
            raise ValueError("k must be at least 1")
        for name in ("q", "c", "T", "S"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("d", "bigN", "bigM", "bigK", "g"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.p <= 1:
            raise ValueError("p must lie in [0, 1]")

    @property
    def u(self) -> int:
        if self.q % self.k:
            raise IndivisibleBudget(f"k={self.k} does not divide q={self.q}")
        return self.q // self.k

    @property
    def v(self) -> int:
        if self.c % self.k:
            raise IndivisibleBudget(f"k={self.k} does not divide c={self.c}")
        return self.c // self.k


@dataclass
class BoundReport:
    params: Params
    entries: list = field(default_factory=list)

    def add(self, name: str, value: ExactValue, tag: Tag) -> None:
        if any(name == existing for existing, _, _ in self.entries):
            raise ValueError(f"duplicate bound entry {name!r}")
        self.entries.append((name, value, Tag(tag)))

    def get(self, name: str) -> ExactValue:
        for existing, value, _ in self.entries:
            if existing == name:
                return value
        raise KeyError(name)

    def to_json(self) -> dict:
        params = {k: (str(v) if isinstance(v, Fraction) else v) for k, v in vars(self.params).items()}
        return {
            "params": params,
            "entries": [
                {"name": name, "tag": tag.value, **value.to_json(), "display": value.render()}
                for name, value, tag in self.entries
            ],
        }


REPORT_SCHEMA = {
    "type": "object",
    "required": ["params", "entries"],
    "properties": {
        "params": {"type": "object"},
        "entries": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "tag", "mode", "float", "display"],
                "properties": {
                    "name": {"type": "string"},
                    "tag": {"enum": [t.value for t in Tag]},
                    "mode": {"enum": ["exact", "log2"]},
                    "value": {"type": "string"},
                    "sign": {"enum": [-1, 0, 1]},
                    "log2": {"type": "number"},
                    "float": {"type": "number"},
                    "display": {"type": "string"},
                },
            },
        },
    },
}


def report_from_json(data: dict) -> BoundReport:
    """Inverse of BoundReport.to_json; validates against REPORT_SCHEMA."""
    jsonschema.validate(data, REPORT_SCHEMA)
    raw = dict(data["params"])
    for key in ("p", "d"):
        if isinstance(raw.get(key), str):
            raw[key] = Fraction(raw[key])
    report = BoundReport(Params(**raw))
    for e in data["entries"]:
        report.add(e["name"], ExactValue.from_json(e), Tag(e["tag"]))
    return report


def _cap(value: ExactValue) -> ExactValue:
    return value.min(1)


# -- hybrid reprogramming ---------------------------------------------------------


def _a_terms(k: int, q: int, c: int) -> list[int]:
    return [math.comb(q, t) ** 2 * math.comb(k, t) * math.comb(c, k - t) for t in range(k + 1)]


def capital_a(k: int, q: int, c: int) -> ExactValue:
    """A_{k,q,c} = sum_t C(q,t)^2 C(k,t) C(c,k-t)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return ExactValue.of(sum(_a_terms(k, q, c)), rounding="up")


def alpha_distribution(k: int, q: int, c: int) -> list[ExactValue]:
    """Probability of reprogramming exactly t quantum positions, t = 0..k."""
    terms = _a_terms(k, q, c)
    total = sum(terms)
    if total == 0:
        raise ZeroMass(f"A_{{{k},{q},{c}}} = 0; need k <= q + c")
    return [ExactValue.of(Fraction(term, total)) for term in terms]


def hybrid_loss_exact(k: int, q: int, c: int) -> ExactValue:
    """Multiplicative loss 2^{2k} k A_{k,q,c} between adversary and simulator."""
    return capital_a(k, q, c).mul(4**k * k, rounding="up")


def hybrid_loss_corrected(k: int, q: int, c: int) -> ExactValue:
    """2^{2k} (k+1) A_{k,q,c+k}.

    The loss the simulator actually achieves when its classical positions range
    over the circuit's c queries plus the k appended ones and alpha is computed
    over those c+k positions. The k+1 counts the values of t in the
    Cauchy-Schwarz step.
    """
    return capital_a(k, q, c + k).mul(4**k * (k + 1), rounding="up")


@dataclass(frozen=True)
class SimplifiedLoss:
    bare: ExactValue  # (8 e^2 (q^2/k^2 + c/k))^k
    full: ExactValue  # bare * 2^{2k} * k


def hybrid_loss_simplified(k: int, q: int, c: int, e_squared: Fraction = E_SQUARED_UPPER) -> SimplifiedLoss:
    if k < 1:
        raise ValueError("k must be at least 1")
    base = ExactValue.of(8 * Fraction(e_squared) * (Fraction(q * q, k * k) + Fraction(c, k)))
    bare = base.pow(k, rounding="up")
    return SimplifiedLoss(bare=bare, full=bare.mul(4**k * k, rounding="up"))


def dfm_loss(k: int, q: int) -> ExactValue:
    """(2q+1)^{2k}, the loss of the non-hybrid measure-and-reprogram lemma."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return ExactValue.of(2 * q + 1, rounding="up").pow(2 * k, rounding="up")


# -- noisy oracles and bounded depth ----------------------------------------------


def _noise_weights(p: Fraction, k: int) -> list[Fraction]:
    return [p ** (k - t) * (1 - p) ** t for t in range(k + 1)]


def noisy_loss_parts(p, T: int, k: int) -> tuple[ExactValue, ExactValue]:
    """(numerator, denominator) of the exact noisy-oracle loss ratio."""
    p = Fraction(p)
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if k < 1 or k > T:
        raise ValueError("need 1 <= k <= T")
    weights = _noise_weights(p, k)
    numerator = k * sum(w * math.comb(T, t) * math.comb(k, t) for t, w in enumerate(weights))
    denominator = Fraction(sum(weights), math.comb(T, k))
    return ExactValue.of(numerator, rounding="up"), ExactValue.of(denominator, rounding="down")


def noisy_loss_exact(p, T: int, k: int) -> ExactValue:
    numerator, denominator = noisy_loss_parts(p, T, k)
    return numerator.div(denominator, rounding="up")


def noisy_loss_corrected(p, T: int, k: int) -> ExactValue:
    """2^{2k} times the exact ratio over T + k positions.

    Matches a simulator that also may reprogram the k appended classical
    queries, and restores the 2^{2k} of the hybrid chain.
    """
    return noisy_loss_exact(p, T + k, k).mul(4**k, rounding="up")


def noisy_loss_asymptotic(p, T: int, k: int) -> ExactValue:
    """C(T,k) (((1-p) T k)^k + k), the asymptotic loss with constant 1."""
    p = Fraction(p)
    if k < 1 or k > T:
        raise ValueError("need 1 <= k <= T")
    inner = ExactValue.of((1 - p) * T * k).pow(k, rounding="up").add(k, rounding="up")
    return inner.mul(math.comb(T, k), rounding="up")


def bounded_depth_params(d: int, T: int) -> tuple[Fraction, int]:
    """A depth-d, T-query algorithm maps to 2T queries against a noisy oracle with p = 1/d."""
    if d < 1:
        raise ValueError("depth must be at least 1")
    return Fraction(1, d), 2 * T


def bounded_depth_loss(d: int, T: int, k: int) -> ExactValue:
    p, queries = bounded_depth_params(d, T)
    return noisy_loss_asymptotic(p, queries, k)


# -- lifting and its applications -------------------------------------------------


def _probability(pR) -> ExactValue:
    value = ExactValue.of(pR)
    if value < 0 or value > 1:
        raise ValueError("p(R) must lie in [0, 1]")
    return value


def lifting_bound_raw(k: int, q: int, c: int, pR) -> ExactValue:
    return hybrid_loss_exact(k, q, c).mul(_probability(pR), rounding="up")


def lifting_bound(k: int, q: int, c: int, pR) -> ExactValue:
    return _cap(lifting_bound_raw(k, q, c, pR))


def dpt_bound(g: int, k: int, q: int, c: int, pR) -> ExactValue:
    if g < 1:
        raise ValueError("g must be at least 1")
    return lifting_bound(k, q, c, pR).pow(g, rounding="up")


def advice_bound_raw(k: int, q: int, c: int, S: int, pR_mis_S) -> ExactValue:
    """4 (loss(k, Sq, Sc) * p(R_MIS^S))^{1/S}, before capping."""
    if S < 1:
        raise ValueError("S must be at least 1")
    inner = hybrid_loss_exact(k, S * q, S * c).mul(_probability(pR_mis_S), rounding="up")
    return inner.root(S, rounding="up").mul(4, rounding="up")


def advice_bound(k: int, q: int, c: int, S: int, pR_mis_S) -> ExactValue:
    return _cap(advice_bound_raw(k, q, c, S, pR_mis_S))


def salted_bound_raw(k: int, q: int, c: int, S: int, bigK: int, pR) -> ExactValue:
    if S < 0 or bigK < 1:
        raise ValueError("need S >= 0 and K >= 1")
    return ExactValue.of(Fraction(4 * S, bigK)).add(lifting_bound_raw(k, q, c, pR), rounding="up")


def salted_bound(k: int, q: int, c: int, S: int, bigK: int, pR) -> ExactValue:
    return _cap(salted_bound_raw(k, q, c, S, bigK, pR))


def multi_image_alg_success(k: int, q: int, c: int, bigN: int) -> ExactValue:
    """Success of the staged hybrid search algorithm for k images: k!/(2^k N^k) (v + u^2)^k."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if q % k or c % k:
        raise IndivisibleBudget(f"k={k} must divide q={q} and c={c}")
    u, v = q // k, c // k
    if v + u * u > bigN:
        return ExactValue.of(1)
    value = Fraction(math.factorial(k) * (v + u * u) ** k, 2**k * bigN**k)
    return ExactValue.of(value, rounding="down")


def hybrid_search_floor(u: int, v: int, bigN: int) -> ExactValue:
    """(1/2)(v/N + u^2/(N - v)): guaranteed single-target success with u quantum and v classical queries."""
    if v >= bigN:
        raise DomainExhausted(f"v={v} classical probes exhaust a domain of size {bigN}")
    return ExactValue.of(Fraction(1, 2) * (Fraction(v, bigN) + Fraction(u * u, bigN - v)), rounding="down")


def optimality_ratio(k: int, u: int, v: int, bigN: int) -> ExactValue:
    """Hardness bound over the staged algorithm's success, 2^{2k} k A k!/N^k / P_A."""
    q, c = k * u, k * v
    hardness = hybrid_loss_exact(k, q, c).mul(Fraction(math.factorial(k), bigN**k))
    return hardness.div(multi_image_alg_success(k, q, c, bigN), rounding="up")


# -- report -----------------------------------------------------------------------


def bound_report(params: Params, pR=None, pR_mis_S=None, use_depth: bool = False) -> BoundReport:
    """Every bound that applies to ``params``.

    Noisy entries need ``T >= k``; lifting entries need ``pR``. With ``use_depth``
    the noisy entries are computed for the bounded-depth map (1/d, 2T).
    """
    P = params
    report = BoundReport(params=P)
    if P.k <= P.q + P.c:
        report.add("capital_a", capital_a(P.k, P.q, P.c), Tag.HYBRID_REPROGRAM)
        report.add("hybrid_loss", hybrid_loss_exact(P.k, P.q, P.c), Tag.HYBRID_REPROGRAM)
        simplified = hybrid_loss_simplified(P.k, P.q, P.c)
        report.add("simplified_factor", simplified.bare, Tag.HYBRID_REPROGRAM_SIMPLIFIED)
        report.add("simplified_loss", simplified.full, Tag.HYBRID_REPROGRAM_SIMPLIFIED)
    report.add("quantum_mr_loss", dfm_loss(P.k, P.q), Tag.QUANTUM_MEASURE_REPROGRAM)
    if P.T >= P.k:
        if use_depth:
            p, queries = bounded_depth_params(P.d, P.T)
            report.add("depth_noise_p", ExactValue.of(p), Tag.BOUNDED_DEPTH)
            report.add("depth_loss", noisy_loss_asymptotic(p, queries, P.k), Tag.BOUNDED_DEPTH)
        else:
            report.add("noisy_loss_exact", noisy_loss_exact(P.p, P.T, P.k), Tag.NOISY_REPROGRAM_EXACT)
            report.add("noisy_loss_asymptotic", noisy_loss_asymptotic(P.p, P.T, P.k), Tag.NOISY_REPROGRAM_ASYMPTOTIC)
    if pR is not None and P.k <= P.q + P.c:
        report.add("p_of_r", ExactValue.of(pR), Tag.P_OF_R)
        report.add("lifting_bound_raw", lifting_bound_raw(P.k, P.q, P.c, pR), Tag.IMAGE_LIFTING)
        report.add("lifting_bound", lifting_bound(P.k, P.q, P.c, pR), Tag.IMAGE_LIFTING)
        report.add("direct_product_bound", dpt_bound(P.g, P.k, P.q, P.c, pR), Tag.DIRECT_PRODUCT)
        report.add("salted_bound", salted_bound(P.k, P.q, P.c, P.S, P.bigK, pR), Tag.SALTING)
    if pR_mis_S is not None and P.S >= 1 and P.k <= P.q + P.c:
        report.add("advice_bound", advice_bound(P.k, P.q, P.c, P.S, pR_mis_S), Tag.ADVICE)
    if P.q % P.k == 0 and P.c % P.k == 0:
        report.add("multi_image_alg_success", multi_image_alg_success(P.k, P.q, P.c, P.bigN), Tag.MULTI_IMAGE_ALGORITHM)
        if P.k == 1 and P.c < P.bigN:
            report.add("hybrid_search_floor", hybrid_search_floor(P.q, P.c, P.bigN), Tag.HYBRID_SEARCH_FLOOR)
    return report


def all_tags() -> Iterable[Tag]:
    return list(Tag)
