"""Stochastic-order predicates and structural checkers.

Orders follow the convention that state 1 is the most desirable: a belief is
"larger" when its likelihood ratios tilt toward low state indices, unit
vector e_1 is maximal and e_S minimal. Checks on the observation kernel
orient the count axis accordingly (larger counts signal better states), so
the kernel's columns are reversed before the total-positivity test.

Verdicts are three-valued: holds, fails with a witness, or unknown when a
check is only a sufficient condition (copositivity certification).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._validation import ValidationError, check_stochastic_matrix
from .model import Model

PRODUCT_TOL = 1e-12
FORM_TOL = 1e-10


@dataclass(frozen=True)
class OrderingVerdict:
    """Outcome of an order check: True, False (with witness), or None (unknown)."""

    holds: bool | None
    witness: object = None

    def __post_init__(self):
        if (self.witness is not None) != (self.holds is False):
            raise ValidationError("witness must be present exactly when the check fails")


@dataclass(frozen=True, eq=False)
class LinePoint:
    """A belief on the segment from an anchor (with anchor[vertex] = 0) to a vertex.

    ``belief = (1 - eps) * anchor + eps * e_vertex``; eps in [0, 1] is the
    line coordinate and increases toward the vertex. vertex is a 0-based
    state index, either 0 or S - 1.
    """

    anchor: np.ndarray
    vertex: int
    eps: float
    belief: np.ndarray = field(init=False)

    def __post_init__(self):
        anchor = np.asarray(self.anchor, dtype=np.float64)
        if not 0.0 <= self.eps <= 1.0:
            raise ValidationError(f"eps must lie in [0, 1], got {self.eps}")
        if anchor[self.vertex] != 0.0:
            raise ValidationError("anchor must place zero mass on the line's vertex")
        belief = (1.0 - self.eps) * anchor
        belief[self.vertex] += self.eps
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(self, "belief", belief)


def belief_line(anchor, vertex: int, eps_grid) -> list[LinePoint]:
    """Points along the segment from anchor to unit vector e_vertex."""
    return [LinePoint(anchor=anchor, vertex=vertex, eps=float(e)) for e in eps_grid]


def sample_lines(
    S: int,
    vertex: int,
    n_lines: int,
    rng: np.random.Generator,
    n_eps: int = 50,
) -> list[list[LinePoint]]:
    """Sample line families: anchors uniform on the facet opposite the vertex.

    Anchors are Dirichlet(1, ..., 1) draws on the (S-1)-simplex with a zero
    inserted at the vertex coordinate; each line carries a uniform eps grid.
    """
    if vertex not in (0, S - 1):
        raise ValidationError(f"line vertex must be 0 or {S - 1}, got {vertex}")
    eps_grid = np.linspace(0.0, 1.0, n_eps)
    lines = []
    for _ in range(n_lines):
        reduced = rng.dirichlet(np.ones(S - 1))
        anchor = np.insert(reduced, vertex, 0.0)
        lines.append(belief_line(anchor, vertex, eps_grid))
    return lines


def is_tp2(A, tol: float = PRODUCT_TOL) -> OrderingVerdict:
    """Check total positivity of order 2: every 2x2 minor is nonnegative.

    The witness is the first violating index quadruple (i1, i2, j1, j2),
    1-based, in row-major order of row then column pairs.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValidationError(f"matrix expected, got shape {A.shape}")
    if np.any(A < 0):
        raise ValidationError("TP2 check requires a nonnegative matrix")
    n, m = A.shape
    for i1 in range(n - 1):
        for i2 in range(i1 + 1, n):
            # minors for all column pairs of this row pair at once
            products = np.outer(A[i1], A[i2])
            minors = products - products.T
            bad = np.argwhere(np.triu(minors, k=1) < -tol)
            if bad.size:
                j1, j2 = bad[0]
                return OrderingVerdict(
                    holds=False, witness=(i1 + 1, i2 + 1, int(j1) + 1, int(j2) + 1)
                )
    return OrderingVerdict(holds=True)


def mlr_geq(p1, p2, tol: float = PRODUCT_TOL) -> bool:
    """Likelihood-ratio dominance: p1 >= p2 iff p1(j)p2(i) <= p2(j)p1(i) for i < j."""
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    lhs = np.outer(p2, p1)  # (i, j) -> p2(i) p1(j)
    rhs = np.outer(p1, p2)  # (i, j) -> p1(i) p2(j)
    diff = np.triu(lhs - rhs, k=1)
    return bool(np.all(diff <= tol))


def fosd_geq(p1, p2, tol: float = PRODUCT_TOL) -> bool:
    """First-order dominance: every upper-tail sum of p1 is at most that of p2.

    With state 1 ranked best, shifting mass toward low indices enlarges a
    distribution, so dominance means smaller upper tails. Implied by mlr_geq.
    """
    t1 = np.cumsum(np.asarray(p1, dtype=np.float64)[::-1])[::-1]
    t2 = np.cumsum(np.asarray(p2, dtype=np.float64)[::-1])[::-1]
    return bool(np.all(t1 <= t2 + tol))


def _decreasing(v, tol: float) -> OrderingVerdict:
    v = np.asarray(v, dtype=np.float64)
    rises = np.where(np.diff(v) > tol)[0]
    if rises.size:
        i = int(rises[0])
        return OrderingVerdict(holds=False, witness=(i + 1, float(v[i]), float(v[i + 1])))
    return OrderingVerdict(holds=True)


@dataclass(frozen=True)
class AssumptionReport:
    """Structural preconditions of the threshold-policy guarantees.

    ``transition_tp2``: all 2x2 minors of P nonnegative.
    ``observation_tp2``: the observation kernel, with its count axis oriented
    best-state-first (columns reversed), is TP2.
    ``adjusted_rewards_decreasing``: (I - rho P) r_l has decreasing elements,
    one verdict per stop level l = 1..L.
    ``rewards_decreasing``: sanity cross-check that each r_l itself is
    decreasing, which the first and third conditions jointly imply.
    """

    transition_tp2: OrderingVerdict
    observation_tp2: OrderingVerdict
    adjusted_rewards_decreasing: tuple[OrderingVerdict, ...]
    rewards_decreasing: tuple[OrderingVerdict, ...]
    warnings: tuple[str, ...] = ()

    @property
    def all_pass(self) -> bool:
        return (
            self.transition_tp2.holds is True
            and self.observation_tp2.holds is True
            and all(v.holds is True for v in self.adjusted_rewards_decreasing)
        )

    def to_dict(self) -> dict:
        def verdict(v: OrderingVerdict):
            return {"holds": v.holds, "witness": _jsonable(v.witness)}

        return {
            "transition_tp2": verdict(self.transition_tp2),
            "observation_tp2": verdict(self.observation_tp2),
            "adjusted_rewards_decreasing": [
                verdict(v) for v in self.adjusted_rewards_decreasing
            ],
            "rewards_decreasing": [verdict(v) for v in self.rewards_decreasing],
            "all_pass": self.all_pass,
            "warnings": list(self.warnings),
        }


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, tuple):
        return [_jsonable(x) for x in obj]
    return obj


def check_assumptions(model: Model, tol: float = PRODUCT_TOL) -> AssumptionReport:
    """Evaluate the structural conditions a model must meet for the
    threshold/nesting guarantees to apply."""
    a1 = is_tp2(model.P, tol=tol)
    a2 = is_tp2(model.B[:, ::-1], tol=tol)
    adjusted = []
    plain = []
    adjust = np.eye(model.S) - model.rho * model.P
    for r in model.rewards:
        adjusted.append(_decreasing(adjust @ r, tol))
        plain.append(_decreasing(r, tol))
    warnings = []
    if model.L > 1 and not np.all(model.rewards == model.rewards[0]):
        warnings.append(
            "per-stop reward vectors differ; threshold-structure guarantees "
            "assume one shared reward vector"
        )
    return AssumptionReport(
        transition_tp2=a1,
        observation_tp2=a2,
        adjusted_rewards_decreasing=tuple(adjusted),
        rewards_decreasing=tuple(plain),
        warnings=tuple(warnings),
    )


def _simplex_mesh(S: int, density: int, cap: int = 200_000) -> np.ndarray:
    """Deterministic simplex sample: the rational grid of the given density,
    or a seeded Dirichlet cloud when that grid would be too large."""
    from math import comb

    if comb(density + S - 1, S - 1) <= cap:
        from .dp import BeliefGrid

        return BeliefGrid(S, density).points
    rng = np.random.default_rng(0)
    return rng.dirichlet(np.ones(S), size=cap)


def copositive_leq(
    A,
    B,
    grid_density: int = 50,
    entry_tol: float = PRODUCT_TOL,
    form_tol: float = FORM_TOL,
) -> OrderingVerdict:
    """Order two transition matrices by one-step likelihood-ratio pull.

    ``copositive_leq(A, B) == holds`` certifies that B's predicted belief
    likelihood-ratio dominates A's from every common belief, which makes B's
    chain at least as valuable as A's for any model meeting the structural
    assumptions. The test builds, for each adjacent column pair j, the
    symmetrized form

        Gamma^j = sym(gamma^j),   gamma^j[m, n] = B[m,j] A[n,j+1] - B[m,j+1] A[n,j]

    and must certify every Gamma^j copositive. Certification is a sufficient
    check (all entries nonnegative, or positive semidefinite); a sampled
    belief with a negative quadratic form refutes it; otherwise the verdict
    is unknown. The witness is (j, belief, form value) with j 1-based.
    """
    A = check_stochastic_matrix(A, "first matrix")
    B = check_stochastic_matrix(B, "second matrix")
    if A.shape != B.shape:
        raise ValidationError(f"shape mismatch: {A.shape} vs {B.shape}")
    S = A.shape[0]
    gammas = []
    uncertified = []
    for j in range(S - 1):
        gamma = np.outer(B[:, j], A[:, j + 1]) - np.outer(B[:, j + 1], A[:, j])
        gamma = 0.5 * (gamma + gamma.T)
        gammas.append(gamma)
        if np.all(gamma >= -entry_tol):
            continue
        if np.linalg.eigvalsh(gamma)[0] >= -entry_tol:
            continue
        uncertified.append(j)
    if not uncertified:
        return OrderingVerdict(holds=True)
    pts = _simplex_mesh(S, grid_density)
    for j in uncertified:
        forms = np.einsum("gi,ij,gj->g", pts, gammas[j], pts)
        worst = int(np.argmin(forms))
        if forms[worst] < -form_tol:
            return OrderingVerdict(
                holds=False, witness=(j + 1, pts[worst].copy(), float(forms[worst]))
            )
    return OrderingVerdict(holds=None)


def _as_decision_fn(policy) -> Callable[[np.ndarray, int], int]:
    if callable(policy):
        return policy
    if hasattr(policy, "act"):
        rng = np.random.default_rng(0)
        return lambda pi, l: policy.act(pi, l, 1, rng)
    raise ValidationError("policy must be callable or expose an act() method")


def policy_monotone_on_lines(
    policy, l: int, lines: Sequence[Sequence[LinePoint]]
) -> OrderingVerdict:
    """Check that a policy's action never rises as beliefs grow along lines.

    Each line is walked in likelihood-ratio-increasing direction (toward
    vertex 0, away from vertex S-1) and the action sequence must be
    nonincreasing: continues first, then stops. The witness is the first
    inversion as (line index, point before, point after).
    """
    decide = _as_decision_fn(policy)
    for k, line in enumerate(lines):
        pts = list(line)
        if pts and pts[0].vertex != 0:
            pts = pts[::-1]
        actions = [decide(p.belief, l) for p in pts]
        for a_prev, a_next, p_prev, p_next in zip(actions, actions[1:], pts, pts[1:]):
            if a_next > a_prev:
                return OrderingVerdict(holds=False, witness=(k, p_prev, p_next))
    return OrderingVerdict(holds=True)


def nested_sets(indicators) -> OrderingVerdict:
    """Check stop regions grow with the remaining-stop count.

    ``indicators[l-1]`` flags the grid points where the policy stops with l
    stops remaining; every point stopped at l - 1 must also stop at l. The
    witness is (grid index, l) for the first point that stops at l - 1 only.
    """
    ind = np.asarray(indicators, dtype=bool)
    if ind.ndim != 2:
        raise ValidationError(f"expected (L, grid) indicators, got shape {ind.shape}")
    for l in range(2, ind.shape[0] + 1):
        broken = np.where(ind[l - 2] & ~ind[l - 1])[0]
        if broken.size:
            return OrderingVerdict(holds=False, witness=(int(broken[0]), l))
    return OrderingVerdict(holds=True)


def count_stop_runs(actions) -> int:
    """Number of maximal consecutive stop runs in an action sequence."""
    a = np.asarray(actions)
    stops = a == 1
    if not stops.any():
        return 0
    return int(np.count_nonzero(np.diff(stops.astype(int)) == 1) + int(stops[0]))
