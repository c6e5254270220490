"""Smooth convex objectives with explicit uniform-smoothness envelopes.

An objective here is E: R^dim -> R, convex and Frechet differentiable, together
with optional metadata used by the greedy drivers and the verification harness:
a power-type smoothness envelope rho(E, u) <= gamma * u^q with 1 < q <= 2, a
radius bound on the sublevel set D = {x : E(x) <= E(0)}, and the ambient norm
the envelope refers to (l2 unless stated otherwise).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class NonFiniteEnergyError(RuntimeError):
    """Objective evaluation produced NaN or infinity."""


class DimensionMismatchError(ValueError):
    """Input point does not match the objective dimension."""


def l2_norm(v: np.ndarray) -> float:
    return float(np.linalg.norm(v))


def lr_norm(v: np.ndarray, r: float) -> float:
    # np.linalg.norm(v, ord=r) underflows for tiny entries raised to large r;
    # factoring out the max keeps the computation scaled.
    a = np.abs(np.asarray(v, dtype=float))
    top = float(a.max()) if a.size else 0.0
    if top == 0.0:
        return 0.0
    return top * float(np.sum((a / top) ** r) ** (1.0 / r))


@dataclass(frozen=True)
class SmoothnessParams:
    """Power-type modulus of smoothness envelope rho(u) = gamma * u^q.

    Args:
        gamma: envelope constant, > 0.
        q: envelope exponent, in (1, 2]. q = 2 for quadratic-like objectives.
    """

    gamma: float
    q: float

    def __post_init__(self):
        if not (self.gamma > 0):
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if not (1.0 < self.q <= 2.0):
            raise ValueError(f"q must be in (1, 2], got {self.q}")

    @property
    def p(self) -> float:
        """Dual exponent q / (q - 1)."""
        return self.q / (self.q - 1.0)

    def rho(self, u: float) -> float:
        """Envelope value gamma * |u|^q."""
        return self.gamma * abs(u) ** self.q


@dataclass(frozen=True)
class Objective:
    """Differentiable convex objective with optional smoothness metadata.

    value/gradient validate dimensions and reject non-finite results instead
    of letting NaN propagate into a greedy run.
    """

    dimension: int
    value_fn: Callable[[np.ndarray], float]
    gradient_fn: Callable[[np.ndarray], np.ndarray]
    smoothness: Optional[SmoothnessParams] = None
    sublevel_radius: Optional[float] = None
    norm: Callable[[np.ndarray], float] = l2_norm
    label: str = ""
    # Optional closed-form minimizer over span(columns); see minimize_subspace.
    subspace_hook: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, compare=False, repr=False
    )

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise DimensionMismatchError(
                f"expected shape ({self.dimension},), got {x.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise NonFiniteEnergyError(f"non-finite input point for {self.label!r}")
        return x

    def value(self, x: np.ndarray) -> float:
        x = self._check(x)
        v = float(self.value_fn(x))
        if not np.isfinite(v):
            raise NonFiniteEnergyError(f"E(x) is not finite for {self.label!r}")
        return v

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        g = np.asarray(self.gradient_fn(x), dtype=float)
        if g.shape != (self.dimension,):
            raise DimensionMismatchError(
                f"gradient shape {g.shape} != ({self.dimension},)"
            )
        if not np.all(np.isfinite(g)):
            raise NonFiniteEnergyError(f"E'(x) is not finite for {self.label!r}")
        return g


def make_least_squares(target: np.ndarray) -> Objective:
    """E(x) = 0.5 * ||target - x||_2^2 on R^len(target).

    Exact smoothness: the second difference is u^2 * ||y||^2 identically, so
    rho(E, u) = 0.5 * u^2 (gamma = 0.5, q = 2). Sublevel set is the ball of
    radius ||target|| around target, hence ||x|| <= 2 ||target|| on D.
    """
    y = np.asarray(target, dtype=float).copy()
    y.setflags(write=False)

    def value(x):
        d = y - x
        return 0.5 * float(np.dot(d, d))

    def grad(x):
        return x - y

    def subspace_hook(basis: np.ndarray) -> np.ndarray:
        coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
        return coef

    return Objective(
        dimension=y.shape[0],
        value_fn=value,
        gradient_fn=grad,
        smoothness=SmoothnessParams(gamma=0.5, q=2.0),
        sublevel_radius=2.0 * l2_norm(y),
        norm=l2_norm,
        label="least_squares",
        subspace_hook=subspace_hook,
    )


def _norming_functional(v: np.ndarray, r: float) -> np.ndarray:
    """F_v with <F_v, v> = ||v||_r and dual norm 1, for 1 < r < infinity."""
    nv = lr_norm(v, r)
    if nv == 0.0:
        return np.zeros_like(v)
    w = v / nv
    return np.sign(w) * np.abs(w) ** (r - 1.0)


def _calibrate_gamma(value_fn, dim, radius, norm, q, seed=2024) -> float:
    """Sampled lower estimate of sup rho(u)/u^q, doubled as a safety margin."""
    rng = np.random.default_rng(seed)
    e0 = value_fn(np.zeros(dim))
    worst = 0.0
    for k in range(0, 9):
        u = 2.0 ** (-k)
        for _ in range(250):
            x = rng.standard_normal(dim)
            nx = norm(x)
            if nx > 0:
                x *= radius * rng.random() ** (1.0 / dim) / nx
            for _ in range(80):
                if value_fn(x) <= e0:
                    break
                x *= 0.5
            y = rng.standard_normal(dim)
            ny = norm(y)
            if ny == 0.0:
                continue
            y /= ny
            second = value_fn(x + u * y) + value_fn(x - u * y) - 2.0 * value_fn(x)
            worst = max(worst, 0.5 * abs(second) / u**q)
    return 2.0 * max(worst, 1e-12)


def make_norm_power(
    target: np.ndarray, r: float, q: float, gamma: Optional[float] = None
) -> Objective:
    """E(x) = ||target - x||_r^q with the l_r ambient norm.

    Gradient: -q ||v||_r^(q-1) F_v at v = target - x, where F_v is the l_r
    norming functional sign(v_i)|v_i|^(r-1) / ||v||_r^(r-1); zero at v = 0
    (q > 1 makes E differentiable there).

    gamma default: for q = 2 and r >= 2 the sharp two-point constant r - 1;
    otherwise a seeded empirical calibration (doubled sampled estimate). The
    (r, q) compatibility is not enforced; the envelope is validated by
    sampling in the test harness.
    """
    if not (1.0 < r < np.inf):
        raise ValueError(f"r must be in (1, inf), got {r}")
    if not (1.0 < q <= 2.0):
        raise ValueError(f"q must be in (1, 2], got {q}")
    f = np.asarray(target, dtype=float).copy()
    f.setflags(write=False)
    dim = f.shape[0]

    def norm(v):
        return lr_norm(v, r)

    def value(x):
        return norm(f - x) ** q

    def grad(x):
        v = f - x
        nv = norm(v)
        if nv == 0.0:
            return np.zeros(dim)
        return -q * nv ** (q - 1.0) * _norming_functional(v, r)

    radius = 2.0 * norm(f)
    if gamma is None:
        if q == 2.0 and r >= 2.0:
            gamma = r - 1.0
        else:
            gamma = _calibrate_gamma(value, dim, radius, norm, q)

    hook = None
    if r == 2.0 and q == 2.0:
        # ||f - Bc||_2^2 minimizes at the least-squares solution.
        def hook(basis: np.ndarray) -> np.ndarray:
            coef, *_ = np.linalg.lstsq(basis, f, rcond=None)
            return coef

    return Objective(
        dimension=dim,
        value_fn=value,
        gradient_fn=grad,
        smoothness=SmoothnessParams(gamma=float(gamma), q=q),
        sublevel_radius=radius,
        norm=norm,
        label=f"norm_power(r={r}, q={q})",
        subspace_hook=hook,
    )


def make_logistic(labels: np.ndarray, features: np.ndarray, mu: float) -> Objective:
    """Mean logistic loss plus a quadratic proximal term.

    E(x) = mean_i log(1 + exp(-l_i <a_i, x>)) + (mu/2) ||x||_2^2 with labels
    l_i in {-1, +1} and feature rows a_i. Smoothness: the loss Hessian is
    bounded by lambda_max(A^T A) / (4N) and the proximal term adds mu, so
    gamma = (lambda_max(A^T A) / (4N) + mu) / 2, q = 2. The proximal term
    gives (mu/2)||x||^2 <= E(x) <= E(0) on D, hence the sublevel radius
    sqrt(2 E(0) / mu).
    """
    A = np.asarray(features, dtype=float)
    l = np.asarray(labels, dtype=float)
    if A.ndim != 2 or l.shape != (A.shape[0],):
        raise ValueError("features must be (N, dim), labels (N,)")
    if not np.all(np.abs(l) == 1.0):
        raise ValueError("labels must be +-1")
    if not (mu > 0):
        raise ValueError(f"mu must be > 0, got {mu}")
    N, dim = A.shape
    LA = l[:, None] * A

    def value(x):
        z = LA @ x
        # log(1 + exp(-z)) computed stably for both signs of z.
        loss = np.logaddexp(0.0, -z).mean()
        return loss + 0.5 * mu * float(np.dot(x, x))

    def grad(x):
        z = LA @ x
        s = 0.5 * (1.0 + np.tanh(-0.5 * z))  # sigmoid(-z), overflow-safe
        return -(LA.T @ s) / N + mu * x

    gram_top = float(np.linalg.eigvalsh(A.T @ A)[-1])
    gamma = (gram_top / (4.0 * N) + mu) / 2.0
    e0 = float(np.log(2.0))

    return Objective(
        dimension=dim,
        value_fn=value,
        gradient_fn=grad,
        smoothness=SmoothnessParams(gamma=gamma, q=2.0),
        sublevel_radius=float(np.sqrt(2.0 * e0 / mu)),
        norm=l2_norm,
        label=f"logistic(mu={mu})",
    )


def check_smoothness_inequality(
    obj: Objective, x: np.ndarray, y: np.ndarray, u: float
) -> tuple[float, float]:
    """Two-sided smoothness check at (x, y, u).

    Requires E(x) <= E(0) (x in the sublevel set), ||y|| = 1 within 1e-12 in
    the objective's ambient norm, and a declared envelope. Returns
    (lhs, rhs - lhs) for the sandwich

        0 <= E(x + u y) - E(x) - u <E'(x), y> <= 2 gamma |u|^q,

    so both entries must be >= 0 up to roundoff for the inequality to hold.
    """
    if obj.smoothness is None:
        raise ValueError("objective declares no smoothness envelope")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ny = obj.norm(y)
    if abs(ny - 1.0) > 1e-12:
        raise ValueError(f"y must be unit in the ambient norm, got {ny}")
    e0 = obj.value(np.zeros(obj.dimension))
    ex = obj.value(x)
    if ex > e0 + 1e-10 * (1.0 + abs(e0)):
        raise ValueError("x is outside the sublevel set D = {E <= E(0)}")
    lhs = obj.value(x + u * y) - ex - u * float(np.dot(obj.gradient(x), y))
    rhs = 2.0 * obj.smoothness.rho(u)
    return lhs, rhs - lhs


def empirical_modulus(
    obj: Objective, u: float, sample_count: int = 200, rng_seed: int = 0
) -> float:
    """Sampled lower estimate of the modulus of smoothness at scale u.

    rho(E, u) = 0.5 sup {|E(x+uy) + E(x-uy) - 2E(x)| : x in D, ||y|| = 1}.
    x is drawn in the ball of the declared sublevel radius and contracted
    toward 0 (always in D) until E(x) <= E(0); y is uniform on the ambient
    unit sphere. Returns the max over samples: a certified lower bound on
    the sup, and <= gamma u^q + tol when the declared envelope is honest.
    """
    if obj.sublevel_radius is None:
        raise ValueError("objective declares no sublevel radius")
    if u == 0.0:
        return 0.0
    rng = np.random.default_rng(rng_seed)
    dim = obj.dimension
    e0 = obj.value(np.zeros(dim))
    best = 0.0
    for _ in range(sample_count):
        x = rng.standard_normal(dim)
        nx = obj.norm(x)
        if nx > 0:
            x *= obj.sublevel_radius * rng.random() ** (1.0 / dim) / nx
        for _ in range(200):
            if obj.value(x) <= e0:
                break
            x *= 0.5
        y = rng.standard_normal(dim)
        ny = obj.norm(y)
        if ny == 0.0:
            continue
        y /= ny
        second = obj.value(x + u * y) + obj.value(x - u * y) - 2.0 * obj.value(x)
        best = max(best, 0.5 * abs(second))
    return best
