"""Quantitative apparatus for greedy convergence analysis.

Provides the smoothness-modulus root solver (the xi quantity driving step-size
choices in the convergence proofs), the inverse-gap recurrence verifier, decay
envelopes for the three main algorithms, and empirical log-log slope fitting.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .algorithms import RunTrace, WeaknessLike, as_weakness

XI_LOWER = 1e-300
XI_UPPER = 2.0
XI_REL_TOL = 1e-12
RECURRENCE_SLACK = 1e-10
GAP_FLOOR = 1e-14


class InsufficientDataError(ValueError):
    """Too few usable points for a fit."""


@dataclass(frozen=True)
class ModulusSpec:
    """Even convex modulus rho(u) with rho(0)=0 and rho(u)/u -> 0.

    Either power-type (gamma * |u|**q) or an arbitrary callable. The ratio
    s(u) = rho(u)/u must be nondecreasing on (0, 2].
    """

    gamma: Optional[float] = None
    q: Optional[float] = None
    rho_fn: Optional[Callable[[float], float]] = None

    @classmethod
    def power(cls, gamma: float, q: float) -> "ModulusSpec":
        if gamma <= 0.0:
            raise ValueError(f"gamma must be > 0, got {gamma}")
        if not (1.0 < q <= 2.0):
            raise ValueError(f"q must be in (1, 2], got {q}")
        return cls(gamma=gamma, q=q)

    @classmethod
    def from_callable(cls, rho: Callable[[float], float]) -> "ModulusSpec":
        return cls(rho_fn=rho)

    @property
    def is_power(self) -> bool:
        return self.rho_fn is None

    def rho(self, u: float) -> float:
        if self.is_power:
            return self.gamma * abs(u) ** self.q
        return float(self.rho_fn(u))

    def s(self, u: float) -> float:
        """The ratio rho(u)/u, increasing in u for valid moduli."""
        if u <= 0.0:
            raise ValueError(f"s(u) needs u > 0, got {u}")
        return self.rho(u) / u

    def validate_monotone(self, grid_size: int = 64) -> None:
        """Check that s is nondecreasing on a log grid over (0, 2]."""
        grid = np.geomspace(1e-8, XI_UPPER, grid_size)
        values = [self.s(u) for u in grid]
        for a, b in zip(values, values[1:]):
            if b < a - 1e-12 * max(abs(a), 1.0):
                raise ValueError("rho(u)/u is not nondecreasing on (0, 2]")


def theta0(modulus: ModulusSpec) -> float:
    """Largest admissible theta: s(2) = rho(2)/2."""
    return modulus.s(XI_UPPER)


def a_q(gamma: float, q: float) -> float:
    """The explicit step-geometry constant 2 * (4*gamma)**(1/(q-1))."""
    if gamma <= 0.0 or not (1.0 < q <= 2.0):
        raise ValueError(f"need gamma > 0 and q in (1, 2], got {gamma}, {q}")
    return 2.0 * (4.0 * gamma) ** (1.0 / (q - 1.0))


def conjugate_exponent(q: float) -> float:
    """p = q/(q-1), the exponent controlling weakness-sum divergence."""
    if not (1.0 < q <= 2.0):
        raise ValueError(f"q must be in (1, 2], got {q}")
    return q / (q - 1.0)


def xi_closed_form(gamma: float, q: float, t: float, theta: float) -> float:
    """Root of gamma*u**(q-1) = theta*t, for power-type moduli."""
    return (theta * t / gamma) ** (1.0 / (q - 1.0))


def solve_xi_flagged(
    modulus: ModulusSpec, t_m: float, theta: float
) -> tuple:
    """Solve rho(xi)/xi = theta*t_m by bisection on (1e-300, 2].

    Returns (xi, underflowed). When the root lies below the bracket the lower
    endpoint is returned with underflowed=True. Relative tolerance 1e-12 on
    the ratio value.
    """
    if not (0.0 < t_m <= 1.0):
        raise ValueError(f"t_m must be in (0, 1], got {t_m}")
    cap = theta0(modulus)
    if not (0.0 < theta <= cap):
        raise ValueError(f"theta must be in (0, {cap:.6g}], got {theta}")
    target = theta * t_m
    if modulus.s(XI_LOWER) >= target:
        return XI_LOWER, True

    lo, hi = math.log(XI_LOWER), math.log(XI_UPPER)
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        value = modulus.s(math.exp(mid))
        if abs(value - target) <= XI_REL_TOL * target:
            return math.exp(mid), False
        if value < target:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi)), False


def solve_xi(modulus: ModulusSpec, t_m: float, theta: float) -> float:
    xi, _ = solve_xi_flagged(modulus, t_m, theta)
    return xi


def xi_weighted_sum(
    modulus: ModulusSpec, weakness: WeaknessLike, theta: float, m_max: int
) -> float:
    """Truncated sum of t_m * xi_m(theta); diverges iff greedy converges.

    For power-type moduli this equals (theta/gamma)**(1/(q-1)) * sum t_m**p.
    """
    tau = as_weakness(weakness)
    total = 0.0
    for m in range(1, m_max + 1):
        t = tau.t(m)
        total += t * solve_xi(modulus, t, theta)
    return total


def t_power_sum(weakness: WeaknessLike, p: float, m_max: int) -> float:
    tau = as_weakness(weakness)
    return sum(tau.t(m) ** p for m in range(1, m_max + 1))


# ---------------------------------------------------------------------------
# inverse-gap recurrence


@dataclass(frozen=True)
class RecurrenceReport:
    passed: bool
    first_violation: Optional[int] = None
    kind: Optional[str] = None  # "hypothesis" | "conclusion"
    min_slack: float = float("inf")

    def __bool__(self) -> bool:
        return self.passed


def verify_recurrence(
    y: Sequence[float],
    w: Sequence[float],
    n: int = 0,
    hypothesis_form: str = "product",
) -> RecurrenceReport:
    """Check the per-step inequality and its telescoped form
    1/y_m >= 1/y_n + sum_{k=n+1..m} w_k, with slack >= -1e-10.

    y has entries y_0..y_M; w has one entry per transition, w[k-1] governing
    y_{k-1} -> y_k. hypothesis_form picks the per-step check:
      "product":   y_k <= y_{k-1} * (1 - w_k * y_{k-1})   (the strict form)
      "increment": 1/y_k >= 1/y_{k-1} + w_k   (implied by "product"; holds
                   with equality for the harmonic exemplar y_k = 1/(k+1), w=1)
    Reports the first violating index k (hypothesis) or m (conclusion).
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if y.ndim != 1 or w.ndim != 1 or len(w) != len(y) - 1:
        raise ValueError(
            f"need len(w) == len(y) - 1, got {len(w)} and {len(y)}"
        )
    if np.any(y < 0.0):
        raise ValueError("y must be nonnegative")
    if np.any(w < 0.0):
        raise ValueError("w must be nonnegative")
    if hypothesis_form not in ("product", "increment"):
        raise ValueError(f"unknown hypothesis_form {hypothesis_form!r}")
    m_top = len(y) - 1
    if not (0 <= n <= m_top):
        raise ValueError(f"n must be in [0, {m_top}], got {n}")

    min_slack = float("inf")
    for k in range(n + 1, m_top + 1):
        if hypothesis_form == "product":
            bound = y[k - 1] * (1.0 - w[k - 1] * y[k - 1])
            slack = bound - y[k]
        else:
            if y[k] == 0.0:
                continue  # 1/y_k is +inf: step holds trivially
            if y[k - 1] == 0.0:
                return RecurrenceReport(False, k, "hypothesis", -np.inf)
            slack = 1.0 / y[k] - 1.0 / y[k - 1] - w[k - 1]
        min_slack = min(min_slack, slack)
        if slack < -RECURRENCE_SLACK:
            return RecurrenceReport(False, k, "hypothesis", min_slack)

    w_sum = 0.0
    for m in range(n + 1, m_top + 1):
        w_sum += w[m - 1]
        if y[m] == 0.0:
            continue  # 1/y_m is +inf, conclusion trivially holds onward
        if y[n] == 0.0:
            return RecurrenceReport(False, m, "conclusion", min_slack)
        slack = 1.0 / y[m] - 1.0 / y[n] - w_sum
        min_slack = min(min_slack, slack)
        if slack < -RECURRENCE_SLACK:
            return RecurrenceReport(False, m, "conclusion", min_slack)

    return RecurrenceReport(True, None, None, min_slack)


# ---------------------------------------------------------------------------
# decay envelopes


class EnvelopeKind(enum.Enum):
    WCGA = "wcga"
    WRGA = "wrga"
    WGAFR = "wgafr"


@dataclass(frozen=True)
class RateEnvelope:
    """Decay envelope for the energy gap of a greedy run.

    WCGA/WGAFR: value(m) = max(2*eps, C * A**kappa * (C_E + S_m)**(1-q))
    WRGA:       value(m) = (1 + C1 * S_m)**(1-q)
    where S_m = sum_{k<=m} t_k**p and p = q/(q-1). For WRGA the constant C
    plays the role of C1 and eps/A are unused.
    """

    kind: EnvelopeKind
    q: float
    weakness: object  # WeaknessSequence
    c: float = 1.0
    c_e: float = 1.0
    eps: float = 0.0
    a_eps: float = 1.0
    kappa: Optional[float] = None  # None -> q (exponent on A)

    def __post_init__(self):
        if not (1.0 < self.q <= 2.0):
            raise ValueError(f"q must be in (1, 2], got {self.q}")
        if self.kappa is not None and self.kappa not in (1.0, self.q):
            raise ValueError(f"kappa must be 1 or q, got {self.kappa}")

    @property
    def p(self) -> float:
        return conjugate_exponent(self.q)

    def weight_sum(self, m: int) -> float:
        return t_power_sum(self.weakness, self.p, m)

    def value(self, m: int) -> float:
        s_m = self.weight_sum(m)
        if self.kind is EnvelopeKind.WRGA:
            return (1.0 + self.c * s_m) ** (1.0 - self.q)
        kappa = self.q if self.kappa is None else self.kappa
        tail = self.c * self.a_eps**kappa * (self.c_e + s_m) ** (1.0 - self.q)
        return max(2.0 * self.eps, tail)

    def values(self, ms: Sequence[int]) -> np.ndarray:
        tau = as_weakness(self.weakness)
        top = int(max(ms))
        sums = np.cumsum([tau.t(m) ** self.p for m in range(1, top + 1)])
        out = []
        for m in ms:
            s_m = sums[int(m) - 1] if m >= 1 else 0.0
            if self.kind is EnvelopeKind.WRGA:
                out.append((1.0 + self.c * s_m) ** (1.0 - self.q))
            else:
                kappa = self.q if self.kappa is None else self.kappa
                tail = (
                    self.c
                    * self.a_eps**kappa
                    * (self.c_e + s_m) ** (1.0 - self.q)
                )
                out.append(max(2.0 * self.eps, tail))
        return np.array(out, dtype=float)


def rate_envelope(
    kind: EnvelopeKind,
    q: float,
    weakness: WeaknessLike,
    c: float = 1.0,
    c_e: float = 1.0,
    eps: float = 0.0,
    a_eps: float = 1.0,
    kappa: Optional[float] = None,
) -> RateEnvelope:
    if kind is EnvelopeKind.WRGA and (eps != 0.0 or a_eps != 1.0):
        raise ValueError("WRGA envelopes take no eps/A parameters")
    return RateEnvelope(
        kind=kind,
        q=q,
        weakness=as_weakness(weakness),
        c=c,
        c_e=c_e,
        eps=eps,
        a_eps=a_eps,
        kappa=kappa,
    )


@dataclass(frozen=True)
class EnvelopeReport:
    passed: bool
    max_ratio: float
    argmax_m: Optional[int]
    calibrated: RateEnvelope

    def __bool__(self) -> bool:
        return self.passed


def calibrate_envelope(
    envelope: RateEnvelope, gap_at_1: float
) -> RateEnvelope:
    """Pin the free constant so value(1) equals the observed gap at m=1.

    WCGA/WGAFR: solves for C (C_E stays fixed, the eps floor is ignored while
    fitting). WRGA: solves for C1, which must come out positive.
    """
    if gap_at_1 <= 0.0:
        raise ValueError(f"gap at m=1 must be > 0 to calibrate, got {gap_at_1}")
    s_1 = envelope.weight_sum(1)
    if envelope.kind is EnvelopeKind.WRGA:
        c1 = (gap_at_1 ** (1.0 / (1.0 - envelope.q)) - 1.0) / s_1
        if c1 <= 0.0:
            raise ValueError(
                f"gap at m=1 is {gap_at_1}, too large for a positive constant"
            )
        return replace(envelope, c=c1)
    kappa = envelope.q if envelope.kappa is None else envelope.kappa
    c = gap_at_1 / (
        envelope.a_eps**kappa * (envelope.c_e + s_1) ** (1.0 - envelope.q)
    )
    return replace(envelope, c=c)


def check_envelope(
    trace: RunTrace,
    envelope: RateEnvelope,
    reference: float = 0.0,
    rtol: float = 1e-6,
) -> EnvelopeReport:
    """Calibrate the envelope at m=1, then require gap(m) <= envelope(m) for
    every later iteration up to relative slack rtol. Reports the max ratio."""
    ms = trace.ms()
    gaps = trace.gaps(reference)
    if len(ms) == 0 or ms[0] != 1:
        raise ValueError("trace must start at iteration 1 for calibration")
    fitted = calibrate_envelope(envelope, float(gaps[0]))
    if len(ms) == 1:
        return EnvelopeReport(True, 1.0, 1, fitted)
    later = ms[1:]
    bounds = fitted.values(later)
    ratios = gaps[1:] / bounds
    worst = int(np.argmax(ratios))
    max_ratio = float(ratios[worst])
    return EnvelopeReport(
        max_ratio <= 1.0 + rtol, max_ratio, int(later[worst]), fitted
    )


# ---------------------------------------------------------------------------
# slope fitting


def fit_power_slope(
    ms: Sequence[int],
    values: Sequence[float],
    m_min: int = 1,
    floor: float = GAP_FLOOR,
) -> float:
    """Least-squares slope of log(values) against log(m) for m >= m_min.

    Points at or below the floor are excluded; fewer than 4 surviving points
    raises InsufficientDataError.
    """
    ms = np.asarray(ms, dtype=float)
    values = np.asarray(values, dtype=float)
    if ms.shape != values.shape:
        raise ValueError("ms and values must have matching shapes")
    window = ms >= m_min
    if int(window.sum()) < 8:
        raise InsufficientDataError(
            f"need >= 8 iterations past m_min={m_min}, have {int(window.sum())}"
        )
    keep = window & (values > floor)
    if int(keep.sum()) < 4:
        raise InsufficientDataError(
            f"only {int(keep.sum())} points above the {floor:g} floor"
        )
    x = np.log(ms[keep])
    z = np.log(values[keep])
    slope, _ = np.polyfit(x, z, 1)
    return float(slope)


def fit_rate_slope(
    trace: RunTrace, m_min: int = 1, reference: float = 0.0
) -> float:
    """Log-log slope of the energy gap along a run."""
    return fit_power_slope(trace.ms(), trace.gaps(reference), m_min)
