"""Event-log ingestion and Poisson hidden Markov chain estimation.

Turns timestamped engagement logs into fixed-width count series, fits the
transition matrix and per-state Poisson rates by expectation-maximization,
and scores candidate state counts with the Bayesian information criterion.

Logs may contain several broadcast sessions (start/end pairs). Sessions are
binned separately and concatenated; the estimator restarts its forward
recursion at each session boundary, so no transition is counted across the
gap between two sessions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
from scipy import stats

from ._validation import ValidationError, check_in_range

EVENT_KINDS = ("start", "end", "join", "like", "comment")

# comments are visible to a small subset of viewers only, so they carry no
# audience-wide signal and stay out of the count stream
COUNTED_KIND = "like"


@dataclass(frozen=True, eq=False)
class EventLog:
    """Timestamped events, sorted by time on construction."""

    timestamps: np.ndarray
    kinds: tuple[str, ...]

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        if ts.ndim != 1 or len(ts) != len(self.kinds):
            raise ValidationError("timestamps and kinds must be 1-D and equally long")
        bad = sorted(set(self.kinds) - set(EVENT_KINDS))
        if bad:
            raise ValidationError(f"unknown event kinds: {bad}")
        order = np.argsort(ts, kind="stable")
        object.__setattr__(self, "timestamps", ts[order])
        object.__setattr__(self, "kinds", tuple(self.kinds[i] for i in order))

    @classmethod
    def from_csv(cls, path) -> "EventLog":
        """Read a `timestamp_s,kind` CSV (header required)."""
        timestamps, kinds = [], []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "timestamp_s" not in reader.fieldnames:
                raise ValidationError(f"{path}: expected header with timestamp_s,kind")
            if "kind" not in reader.fieldnames:
                raise ValidationError(f"{path}: expected header with timestamp_s,kind")
            for row in reader:
                timestamps.append(float(row["timestamp_s"]))
                kinds.append(row["kind"].strip())
        return cls(timestamps=np.asarray(timestamps), kinds=tuple(kinds))

    def __len__(self) -> int:
        return len(self.kinds)

    def sessions(self) -> list[tuple[float, float]]:
        """Paired (start, end) times in order; raises if unpaired."""
        out = []
        open_start = None
        for t, kind in zip(self.timestamps, self.kinds):
            if kind == "start":
                if open_start is not None:
                    raise ValidationError("start event while a session is already open")
                open_start = float(t)
            elif kind == "end":
                if open_start is None:
                    raise ValidationError("end event without a preceding start")
                if t <= open_start:
                    raise ValidationError("session end does not follow its start")
                out.append((open_start, float(t)))
                open_start = None
        if open_start is not None:
            raise ValidationError("unterminated session (start without end)")
        if not out:
            raise ValidationError("log contains no start/end session markers")
        return out


@dataclass(frozen=True, eq=False)
class CountSeries:
    """Per-bin like counts over one or more sessions.

    ``breaks`` holds the index of each session's first bin, always starting
    with 0; consumers treat those positions as chain restarts.
    """

    width: float
    counts: np.ndarray
    breaks: np.ndarray = field(default_factory=lambda: np.zeros(1, dtype=np.int64))

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        breaks = np.asarray(self.breaks, dtype=np.int64)
        if counts.ndim != 1 or len(counts) == 0:
            raise ValidationError("counts must be a nonempty 1-D integer array")
        if np.any(counts < 0):
            raise ValidationError("counts must be nonnegative")
        if self.width <= 0:
            raise ValidationError("bin width must be positive")
        if len(breaks) == 0 or breaks[0] != 0 or np.any(np.diff(breaks) <= 0):
            raise ValidationError("breaks must start at 0 and strictly increase")
        if breaks[-1] >= len(counts):
            raise ValidationError("break index beyond the end of counts")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "breaks", breaks)

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def n_sessions(self) -> int:
        return len(self.breaks)

    def session_starts_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.counts), dtype=np.bool_)
        mask[self.breaks] = True
        return mask


def bin_events(log: EventLog, width: float = 2.0) -> CountSeries:
    """Count like events in half-open bins of `width` seconds per session.

    A session [a, b) gets ceil((b - a) / width) bins. A like falling exactly
    on b is folded into the last bin so totals are conserved.
    """
    check_in_range(float(width), "width", low=0.0, low_open=True)
    sessions = log.sessions()
    likes = np.asarray(
        [t for t, k in zip(log.timestamps, log.kinds) if k == COUNTED_KIND]
    )

    chunks, breaks, offset = [], [], 0
    for a, b in sessions:
        n_bins = max(1, math.ceil((b - a) / width))
        counts = np.zeros(n_bins, dtype=np.int64)
        if len(likes):
            inside = likes[(likes >= a) & (likes <= b)]
            idx = np.minimum(((inside - a) // width).astype(np.int64), n_bins - 1)
            np.add.at(counts, idx, 1)
        chunks.append(counts)
        breaks.append(offset)
        offset += n_bins
    return CountSeries(
        width=float(width),
        counts=np.concatenate(chunks),
        breaks=np.asarray(breaks, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# EM for the Poisson hidden Markov chain
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _forward_pass(A, btilde, pi0, starts):  # pragma: no cover - compiled
    T, S = btilde.shape
    alpha = np.empty((T, S))
    c = np.empty(T)
    for t in range(T):
        if starts[t]:
            for i in range(S):
                alpha[t, i] = pi0[i] * btilde[t, i]
        else:
            for i in range(S):
                acc = 0.0
                for j in range(S):
                    acc += alpha[t - 1, j] * A[j, i]
                alpha[t, i] = acc * btilde[t, i]
        ct = 0.0
        for i in range(S):
            ct += alpha[t, i]
        if ct <= 0.0:
            ct = 1e-300
        c[t] = ct
        for i in range(S):
            alpha[t, i] /= ct
    return alpha, c


@numba.njit(cache=True)
def _backward_pass(A, btilde, c, starts):  # pragma: no cover - compiled
    T, S = btilde.shape
    beta = np.empty((T, S))
    for i in range(S):
        beta[T - 1, i] = 1.0
    for t in range(T - 2, -1, -1):
        if starts[t + 1]:
            for i in range(S):
                beta[t, i] = 1.0
        else:
            for i in range(S):
                acc = 0.0
                for j in range(S):
                    acc += A[i, j] * btilde[t + 1, j] * beta[t + 1, j]
                beta[t, i] = acc / c[t + 1]
    return beta


def _log_emissions(counts: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    logp = stats.poisson.logpmf(counts[:, None], g[None, :])
    shift = logp.max(axis=1)
    return np.exp(logp - shift[:, None]), shift


def _em_once(counts, starts, S, P, g, pi, max_iter, tol):
    """One EM run from the given starting parameters."""
    T = len(counts)
    trace = []
    prev = -np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        btilde, shift = _log_emissions(counts, g)
        alpha, c = _forward_pass(P, btilde, pi, starts)
        beta = _backward_pass(P, btilde, c, starts)
        loglik = float(np.log(c).sum() + shift.sum())
        trace.append(loglik)

        gamma = alpha * beta
        gamma /= gamma.sum(axis=1, keepdims=True)

        # transitions within sessions only
        within = ~starts[1:]
        xi = (
            alpha[:-1, :, None]
            * P[None, :, :]
            * (btilde[1:] * beta[1:] / c[1:, None])[:, None, :]
        )
        xi_sum = xi[within].sum(axis=0)

        row = xi_sum.sum(axis=1, keepdims=True)
        P = np.where(row > 1e-300, xi_sum / np.maximum(row, 1e-300), 1.0 / S)
        P /= P.sum(axis=1, keepdims=True)

        occ = gamma.sum(axis=0)
        weighted = gamma.T @ counts
        g = np.where(occ > 1e-12, weighted / np.maximum(occ, 1e-12), g)
        g = np.maximum(g, 1e-8)

        pi = gamma[starts].mean(axis=0)
        pi = pi / pi.sum()

        if it > 1 and abs(loglik - prev) <= tol * (1.0 + abs(prev)):
            converged = True
            break
        prev = loglik
    return P, g, pi, trace[-1], np.asarray(trace), it, converged


def _stationary(P: np.ndarray) -> np.ndarray:
    S = P.shape[0]
    M = np.vstack([P.T - np.eye(S), np.ones(S)])
    b = np.zeros(S + 1)
    b[-1] = 1.0
    sol, *_ = np.linalg.lstsq(M, b, rcond=None)
    sol = np.clip(sol, 0.0, None)
    return sol / sol.sum()


@dataclass(frozen=True, eq=False)
class FitResult:
    """Estimated chain for one state count, after relabeling.

    States are sorted by decreasing rate (ties broken by stationary mass),
    so state 1 is always the highest-interest regime.
    """

    S: int
    P: np.ndarray
    g: np.ndarray
    pi: np.ndarray
    loglik: float
    bic: float
    n_obs: int
    n_iter: int
    converged: bool
    identifiable: bool
    loglik_trace: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "states": self.S,
            "transition": self.P.tolist(),
            "rates": self.g.tolist(),
            "initial": self.pi.tolist(),
            "loglik": self.loglik,
            "bic": self.bic,
            "n_obs": self.n_obs,
            "n_iter": self.n_iter,
            "converged": self.converged,
            "identifiable": self.identifiable,
        }

    def to_model(self, rewards, rho: float, L: int, pi0=None):
        """Package the estimate as a decision model with Poisson observations."""
        from .model import Model, PoissonObservations

        if pi0 is None:
            pi0 = _stationary(self.P)
        return Model(
            P=self.P,
            obs=PoissonObservations(rates=self.g),
            rewards=np.asarray(rewards, dtype=np.float64),
            rho=float(rho),
            L=int(L),
            pi0=np.asarray(pi0, dtype=np.float64),
        )


def bic_value(loglik: float, S: int, n_obs: int) -> float:
    """Information criterion with S^2 + S - 1 free parameters."""
    return -2.0 * loglik + (S * S + S - 1) * math.log(n_obs)


def _initial_rates(counts: np.ndarray, S: int, rng: np.random.Generator, jitter: bool):
    base = None
    if not jitter:
        try:
            from scipy.cluster.vq import kmeans2

            centers, _ = kmeans2(
                counts.astype(np.float64)[:, None], S, minit="++", seed=1
            )
            base = np.sort(centers.ravel())
        except Exception:
            base = None
    if base is None:
        base = np.quantile(counts.astype(np.float64), np.linspace(0.1, 0.9, S))
    if jitter:
        base = base * rng.uniform(0.5, 1.5, size=S)
    return np.maximum(np.sort(base), 1e-2)


def fit_poisson_hmm(
    series: CountSeries,
    S: int,
    seed: int = 0,
    max_iter: int = 500,
    tol: float = 1e-8,
    n_starts: int = 10,
) -> FitResult:
    """Maximum-likelihood chain and rates for `S` hidden states.

    Runs `n_starts` independently initialized EM searches and keeps the
    highest-likelihood one. All-identical counts cannot pin down more than
    one state; the result is then flagged unidentifiable but still returned.
    """
    check_in_range(int(S), "S", low=2)
    check_in_range(int(max_iter), "max_iter", low=1)
    check_in_range(int(n_starts), "n_starts", low=1)
    counts = series.counts
    if len(counts) < S:
        raise ValidationError(f"series of length {len(counts)} too short for S={S}")
    identifiable = bool(np.ptp(counts) > 0)
    starts = series.session_starts_mask()

    rng = np.random.default_rng(seed)
    best = None
    for k in range(n_starts):
        g0 = _initial_rates(counts, S, rng, jitter=k > 0)
        diag = rng.uniform(0.4, 0.9)
        P0 = np.full((S, S), (1.0 - diag) / (S - 1)) + (
            diag - (1.0 - diag) / (S - 1)
        ) * np.eye(S)
        pi0 = np.full(S, 1.0 / S)
        run = _em_once(counts, starts, S, P0, g0, pi0, max_iter, tol)
        if best is None or run[3] > best[3]:
            best = run

    P, g, pi, loglik, trace, n_iter, converged = best
    order = np.lexsort((-_stationary(P), -g))
    P = np.ascontiguousarray(P[np.ix_(order, order)])
    g = g[order]
    pi = pi[order]
    return FitResult(
        S=int(S),
        P=P,
        g=g,
        pi=pi,
        loglik=loglik,
        bic=bic_value(loglik, int(S), len(counts)),
        n_obs=len(counts),
        n_iter=n_iter,
        converged=converged,
        identifiable=identifiable,
        loglik_trace=trace,
    )


def bic_scan(
    series: CountSeries,
    S_range,
    seed: int = 0,
    max_iter: int = 500,
    tol: float = 1e-8,
    n_starts: int = 10,
) -> list[FitResult]:
    """Fit every S in `S_range`; the caller picks the BIC argmin (see `best_fit`)."""
    S_values = sorted(set(int(s) for s in S_range))
    if not S_values:
        raise ValidationError("S_range must be nonempty")
    return [
        fit_poisson_hmm(
            series, S, seed=seed, max_iter=max_iter, tol=tol, n_starts=n_starts
        )
        for S in S_values
    ]


def best_fit(results: list[FitResult]) -> FitResult:
    if not results:
        raise ValidationError("no fit results to choose from")
    return min(results, key=lambda r: r.bic)


def one_step_cdf_values(series: CountSeries, fit: FitResult) -> np.ndarray:
    """One-step-ahead predictive cdf evaluated at each observed count.

    Under a correct model these are approximately uniform; export them for
    external goodness-of-fit plots.
    """
    btilde, _ = _log_emissions(series.counts, fit.g)
    starts = series.session_starts_mask()
    alpha, _ = _forward_pass(fit.P, btilde, fit.pi, starts)
    out = np.empty(len(series.counts))
    for t in range(len(series.counts)):
        pred = fit.pi if starts[t] else alpha[t - 1] @ fit.P
        out[t] = float(pred @ stats.poisson.cdf(series.counts[t], fit.g))
    return out
