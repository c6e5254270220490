"""Greedy approximation drivers over symmetric dictionaries.

Every driver shares the same skeleton: G_0 = 0; at step m select an atom
(gradient-greedy with weakness t_m, or energy-greedy for the prescribed-step
variant), then move according to the update rule:

  Chebyshev        re-minimize E over the span of all selected atoms
  ConvexRelaxation G_m = (1 - lam) G_{m-1} + lam phi, lam in [0, 1]
  FreeRelaxation   G_m = (1 - w) G_{m-1} + lam phi, (w, lam) jointly optimal
  BestStep         G_m = G_{m-1} + c phi with c from exact line search
  ReducedStep      as BestStep but apply b * c, 0 < b < 1
  FixedRelaxation  G_m = (1 - r_m) G_{m-1} + c phi, c from line search
  Prescribed       G_m = G_{m-1} + c_m phi with c_m given up front

Traces record per-iteration energies, selection certificates, step data,
synthesis l1 mass, and wall time.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .dictionaries import (
    Atom,
    Dictionary,
    FiniteDictionary,
    SelectionCertificate,
    WeaknessCertificationError,
    select_e_greedy_fixed,
    select_gradient_greedy,
    synthesis_l1,
)
from .inner_solvers import (
    DERIVATIVE_TOL,
    FREE_RELAX_SWEEPS,
    SUBSPACE_TOL,
    LineSearchError,
    SubspaceToleranceError,
    line_search_ray,
    line_search_real,
    minimize_free_relaxation,
    minimize_subspace,
    minimize_unit_interval,
)
from .objectives import Objective

ENERGY_SLACK = 1e-10
MERGE_COLINEAR_TOL = 1e-10


class StopReason(enum.Enum):
    MAX_ITERATIONS = "MaxIterations"
    SUP_SCORE_TOL = "SupScoreTol"
    GAP_TOL = "GapTol"
    INNER_FAILURE = "InnerFailure"


class MonotonicityError(RuntimeError):
    """A provably non-increasing rule increased the energy."""


class GreedyRunError(RuntimeError):
    """Inner-solver failure, annotated with the iteration and partial trace."""

    def __init__(self, iteration: int, trace: "RunTrace", cause: Exception):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration
        self.trace = trace
        self.cause = cause


@dataclass(frozen=True)
class StopRule:
    """Stopping configuration.

    sup_tol: stop when the selection's reference sup-score drops to this level
    (negative disables). gap_tol: stop when energy - reference <= gap_tol
    (None disables, the default).
    """

    max_m: int = 500
    sup_tol: float = 1e-10
    gap_tol: Optional[float] = None
    reference: float = 0.0


@dataclass(frozen=True)
class WeaknessSequence:
    """Weakness parameters t_m in (0, 1], 1-based.

    kinds: "constant", "list" (errors past the end of the list), or "power"
    (t_m = m^-exponent with exponent >= 0).
    """

    kind: str
    value: float = 1.0
    values: tuple = ()
    exponent: float = 0.0

    @classmethod
    def constant(cls, t: float) -> "WeaknessSequence":
        if not (0.0 < t <= 1.0):
            raise ValueError(f"t must be in (0, 1], got {t}")
        return cls(kind="constant", value=t)

    @classmethod
    def from_list(cls, ts: Sequence[float]) -> "WeaknessSequence":
        ts = tuple(float(t) for t in ts)
        for t in ts:
            if not (0.0 < t <= 1.0):
                raise ValueError(f"every t must be in (0, 1], got {t}")
        return cls(kind="list", values=ts)

    @classmethod
    def power(cls, exponent: float) -> "WeaknessSequence":
        if exponent < 0.0:
            raise ValueError(f"exponent must be >= 0, got {exponent}")
        return cls(kind="power", exponent=exponent)

    def t(self, m: int) -> float:
        if m < 1:
            raise ValueError(f"iterations are 1-based, got {m}")
        if self.kind == "constant":
            return self.value
        if self.kind == "list":
            if m > len(self.values):
                raise ValueError(
                    f"weakness list of length {len(self.values)} exhausted at m={m}"
                )
            return self.values[m - 1]
        if self.kind == "power":
            return float(m) ** (-self.exponent)
        raise ValueError(f"unknown weakness kind {self.kind!r}")


WeaknessLike = Union[WeaknessSequence, float, Sequence[float], Callable[[int], float]]


def as_weakness(spec: WeaknessLike) -> WeaknessSequence:
    if isinstance(spec, WeaknessSequence):
        return spec
    if isinstance(spec, (int, float)):
        return WeaknessSequence.constant(float(spec))
    if callable(spec):
        # wrap arbitrary callables as an unbounded "power"-style accessor
        class _CallableSeq(WeaknessSequence):
            def t(self, m: int) -> float:  # type: ignore[override]
                return float(spec(m))

        return _CallableSeq(kind="constant")
    return WeaknessSequence.from_list(spec)


def _schedule_value(spec, m: int) -> float:
    """Value of a per-iteration schedule given as scalar, sequence, or callable."""
    if isinstance(spec, (int, float)):
        return float(spec)
    if callable(spec):
        return float(spec(m))
    if m > len(spec):
        raise ValueError(f"schedule of length {len(spec)} exhausted at m={m}")
    return float(spec[m - 1])


# ---------------------------------------------------------------------------
# update rules


@dataclass(frozen=True)
class Chebyshev:
    subspace_tol: float = SUBSPACE_TOL


@dataclass(frozen=True)
class ConvexRelaxation:
    tol: float = DERIVATIVE_TOL


@dataclass(frozen=True)
class FreeRelaxation:
    tol: float = DERIVATIVE_TOL
    max_sweeps: int = FREE_RELAX_SWEEPS


@dataclass(frozen=True)
class BestStep:
    tol: float = DERIVATIVE_TOL


@dataclass(frozen=True)
class ReducedStep:
    b: float = 0.5
    tol: float = DERIVATIVE_TOL

    def __post_init__(self):
        if not (0.0 < self.b < 1.0):
            raise ValueError(f"b must be in (0, 1), got {self.b}")


@dataclass(frozen=True)
class FixedRelaxation:
    schedule: object = 0.0  # r_m in [0, 1): scalar, sequence, or callable
    tol: float = DERIVATIVE_TOL


@dataclass(frozen=True)
class Prescribed:
    steps: object = 1.0  # c_m > 0: scalar, sequence, or callable
    selection: str = "gradient"  # "gradient" | "energy"

    def __post_init__(self):
        if self.selection not in ("gradient", "energy"):
            raise ValueError(f"unknown selection {self.selection!r}")


UpdateRule = Union[
    Chebyshev,
    ConvexRelaxation,
    FreeRelaxation,
    BestStep,
    ReducedStep,
    FixedRelaxation,
    Prescribed,
]

# rules with a per-step non-increase guarantee, enforced at runtime
MONOTONE_RULES = (Chebyshev, ConvexRelaxation, FreeRelaxation, BestStep)


# ---------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class SparseApproximant:
    """Signed-atom expansion G = sum_i coef_i * realize(atom_i)."""

    terms: tuple  # ((Atom, float), ...)
    point: np.ndarray

    @property
    def l1_mass(self) -> float:
        return synthesis_l1(c for _, c in self.terms)


@dataclass(frozen=True)
class IterationRecord:
    m: int
    energy: float
    atom: Atom
    score: float
    sup_score: float
    weakness_ratio: float
    lam: float
    w_or_r: float
    l1_mass: float
    wall_ns: int
    approximant: SparseApproximant
    grad_inf: float = float("nan")


@dataclass
class RunTrace:
    algorithm: str
    objective_label: str
    stop_reason: StopReason
    initial_energy: float
    records: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def final(self) -> Optional[SparseApproximant]:
        return self.records[-1].approximant if self.records else None

    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.records], dtype=float)

    def gaps(self, reference: float = 0.0) -> np.ndarray:
        return self.energies() - reference

    def ms(self) -> np.ndarray:
        return np.array([r.m for r in self.records], dtype=int)


def stopping_reason(trace: RunTrace) -> StopReason:
    return trace.stop_reason


# ---------------------------------------------------------------------------
# driver


def _rule_name(rule: UpdateRule) -> str:
    return {
        Chebyshev: "wcga",
        ConvexRelaxation: "wrga",
        FreeRelaxation: "wgafr",
        BestStep: "best_step",
        ReducedStep: "reduced_step",
        FixedRelaxation: "fixed_relaxation",
        Prescribed: "prescribed",
    }[type(rule)]


def run_greedy(
    objective: Objective,
    dictionary: Dictionary,
    weakness: WeaknessLike,
    rule: UpdateRule,
    stop: StopRule = StopRule(),
) -> RunTrace:
    """Run a greedy algorithm; see the module docstring for rule semantics."""
    tau = as_weakness(weakness)
    dim = objective.dimension
    if dictionary.ambient_dim != dim:
        raise ValueError(
            f"dictionary dim {dictionary.ambient_dim} != objective dim {dim}"
        )

    G = np.zeros(dim)
    terms: list = []
    basis_atoms: list = []
    basis_vecs: list = []
    prev_coef = np.zeros(0)
    e_prev = objective.value(G)
    trace = RunTrace(
        algorithm=_rule_name(rule),
        objective_label=objective.label,
        stop_reason=StopReason.MAX_ITERATIONS,
        initial_energy=e_prev,
    )

    for m in range(1, stop.max_m + 1):
        t0 = time.perf_counter_ns()
        t_m = tau.t(m)
        direction = -objective.gradient(G)

        try:
            # --- selection -------------------------------------------------
            sup_for_stop: Optional[float] = None
            if isinstance(rule, Prescribed) and rule.selection == "energy":
                c_m = _schedule_value(rule.steps, m)
                if not (c_m > 0.0):
                    raise ValueError(f"prescribed step must be > 0, got {c_m}")
                atom = select_e_greedy_fixed(dictionary, objective, G, c_m)
                score = float(np.dot(direction, dictionary.realize(atom)))
                cert = SelectionCertificate(
                    atom, score, float("nan"), t_m, float("nan")
                )
            elif isinstance(rule, ConvexRelaxation):
                # selection functional is shifted by -G; the shift is constant
                # over the dictionary so the argmax atom is the plain one, but
                # score/reference must include it.
                value, atom, upper, converged = dictionary.certified_sup(direction)
                shift = float(np.dot(direction, G))
                reference = (value if converged else upper) - shift
                score = float(np.dot(direction, dictionary.realize(atom))) - shift
                if score < t_m * reference - 1e-10:
                    raise WeaknessCertificationError(
                        f"shifted score {score:.6e} < t * reference "
                        f"= {t_m * reference:.6e}"
                    )
                ratio = 1.0 if reference == 0.0 else score / reference
                cert = SelectionCertificate(
                    atom, score, reference, t_m, ratio, converged
                )
                sup_for_stop = reference
            else:
                cert = select_gradient_greedy(dictionary, direction, t_m)
                sup_for_stop = cert.reference

            if sup_for_stop is not None and sup_for_stop <= stop.sup_tol:
                trace.stop_reason = StopReason.SUP_SCORE_TOL
                break

            atom = cert.atom
            phi = dictionary.realize(atom)

            # --- update ----------------------------------------------------
            lam = float("nan")
            w_or_r = float("nan")
            grad_inf = float("nan")

            if isinstance(rule, Chebyshev):
                merged = _merge_into_basis(
                    dictionary, atom, phi, basis_atoms, basis_vecs
                )
                basis = np.column_stack(basis_vecs)
                x0 = np.append(prev_coef, 0.0) if not merged else prev_coef
                result = minimize_subspace(
                    objective, basis, rule.subspace_tol, x0=x0
                )
                prev_coef = result.coefficients
                G = result.point
                terms = list(zip(basis_atoms, prev_coef.tolist()))
                new_idx = _basis_position(dictionary, atom, basis_atoms)
                lam = float(prev_coef[new_idx])
                grad_inf = result.grad_inf
            elif isinstance(rule, ConvexRelaxation):
                delta = phi - G

                def phi_lam(c, G=G, delta=delta):
                    return objective.value(G + c * delta)

                def dphi_lam(c, G=G, delta=delta):
                    return float(
                        np.dot(objective.gradient(G + c * delta), delta)
                    )

                res = minimize_unit_interval(phi_lam, rule.tol, dphi_lam)
                lam = res.argmin
                G = G + lam * delta
                terms = [(a, (1.0 - lam) * c) for a, c in terms]
                terms.append((atom, lam))
            elif isinstance(rule, FreeRelaxation):
                res = minimize_free_relaxation(
                    objective, G, phi, rule.tol, rule.max_sweeps
                )
                lam, w_or_r = res.lam, res.w
                G = (1.0 - res.w) * G + lam * phi
                terms = [(a, (1.0 - res.w) * c) for a, c in terms]
                terms.append((atom, lam))
            elif isinstance(rule, (BestStep, ReducedStep)):

                def phi_c(c, G=G, phi=phi):
                    return objective.value(G + c * phi)

                def dphi_c(c, G=G, phi=phi):
                    return float(np.dot(objective.gradient(G + c * phi), phi))

                res = line_search_ray(phi_c, 0.0, np.inf, rule.tol, dphi_c)
                applied = res.argmin
                if isinstance(rule, ReducedStep):
                    applied *= rule.b
                    w_or_r = rule.b
                lam = applied
                G = G + applied * phi
                terms.append((atom, applied))
            elif isinstance(rule, FixedRelaxation):
                r_m = _schedule_value(rule.schedule, m)
                if not (0.0 <= r_m < 1.0):
                    raise ValueError(f"r_m must be in [0, 1), got {r_m}")
                base = (1.0 - r_m) * G

                def phi_c(c, base=base, phi=phi):
                    return objective.value(base + c * phi)

                def dphi_c(c, base=base, phi=phi):
                    return float(np.dot(objective.gradient(base + c * phi), phi))

                res = line_search_real(phi_c, rule.tol, dphi_c)
                lam = res.argmin
                w_or_r = r_m
                G = base + lam * phi
                terms = [(a, (1.0 - r_m) * c) for a, c in terms]
                terms.append((atom, lam))
            elif isinstance(rule, Prescribed):
                c_m = _schedule_value(rule.steps, m)
                if not (c_m > 0.0):
                    raise ValueError(f"prescribed step must be > 0, got {c_m}")
                lam = c_m
                G = G + c_m * phi
                terms.append((atom, c_m))
            else:
                raise TypeError(f"unknown update rule {rule!r}")

            energy = objective.value(G)
        except (LineSearchError, SubspaceToleranceError) as exc:
            trace.stop_reason = StopReason.INNER_FAILURE
            raise GreedyRunError(m, trace, exc) from exc

        if isinstance(rule, MONOTONE_RULES) and energy > e_prev + ENERGY_SLACK:
            raise MonotonicityError(
                f"m={m}: energy rose {e_prev:.17g} -> {energy:.17g}"
            )
        e_prev = energy

        snapshot = SparseApproximant(tuple(terms), G.copy())
        trace.records.append(
            IterationRecord(
                m=m,
                energy=energy,
                atom=atom,
                score=cert.score,
                sup_score=cert.reference,
                weakness_ratio=cert.ratio,
                lam=lam,
                w_or_r=w_or_r,
                l1_mass=snapshot.l1_mass,
                wall_ns=time.perf_counter_ns() - t0,
                approximant=snapshot,
                grad_inf=grad_inf,
            )
        )

        if (
            stop.gap_tol is not None
            and energy - stop.reference <= stop.gap_tol
        ):
            trace.stop_reason = StopReason.GAP_TOL
            break

    return trace


def _merge_into_basis(dictionary, atom, vec, basis_atoms, basis_vecs) -> bool:
    """Add the atom's direction to the Chebyshev basis unless already spanned
    by an existing basis vector (same column index, or colinear rank-one
    factor pair). Returns True when merged (nothing appended)."""
    if isinstance(dictionary, FiniteDictionary):
        for b in basis_atoms:
            if b.index == atom.index:
                return True
    else:
        for bv in basis_vecs:
            if abs(float(np.dot(vec, bv))) >= 1.0 - MERGE_COLINEAR_TOL:
                return True
    basis_atoms.append(atom)
    basis_vecs.append(np.asarray(vec, dtype=float))
    return False


def _basis_position(dictionary, atom, basis_atoms) -> int:
    if isinstance(dictionary, FiniteDictionary):
        for i, b in enumerate(basis_atoms):
            if b.index == atom.index:
                return i
    return len(basis_atoms) - 1


def run_wcga_co(
    objective: Objective,
    dictionary: Dictionary,
    weakness: WeaknessLike = 1.0,
    stop: StopRule = StopRule(),
    subspace_tol: float = SUBSPACE_TOL,
) -> RunTrace:
    """Weak Chebyshev greedy algorithm for convex objectives."""
    return run_greedy(objective, dictionary, weakness, Chebyshev(subspace_tol), stop)


def run_wrga_co(
    objective: Objective,
    dictionary: Dictionary,
    weakness: WeaknessLike = 1.0,
    stop: StopRule = StopRule(),
) -> RunTrace:
    """Weak relaxed greedy algorithm; iterates stay in the atom hull A1(D)."""
    return run_greedy(objective, dictionary, weakness, ConvexRelaxation(), stop)


def run_wgafr_co(
    objective: Objective,
    dictionary: Dictionary,
    weakness: WeaknessLike = 1.0,
    stop: StopRule = StopRule(),
) -> RunTrace:
    """Weak greedy algorithm with free relaxation."""
    return run_greedy(objective, dictionary, weakness, FreeRelaxation(), stop)


def run_generic(
    objective: Objective,
    dictionary: Dictionary,
    weakness: WeaknessLike,
    rule: UpdateRule,
    stop: StopRule = StopRule(),
) -> RunTrace:
    """Run any update rule (BestStep, ReducedStep, FixedRelaxation, ...)."""
    return run_greedy(objective, dictionary, weakness, rule, stop)
