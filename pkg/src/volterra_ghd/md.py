"""Monte Carlo estimation of GGE space-time correlation functions.

Each trial samples an i.i.d. GGE state, integrates the Volterra flow to the
requested snapshot times and accumulates circular field-field products.
Estimates use grand-mean subtraction (per-trial centering would bias the
sum rule at O(1/R)); standard errors come from an exact jackknife over
trials, evaluated from accumulated moment sums so no per-trial storage is
needed and merging partial results stays associative.
"""
from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np

from .ensembles import GgeParams, sample_gge
from .integrator import IntegrationError, integrate
from .lattice import LatticeState, local_fields

__all__ = [
    "MdPlan",
    "TrialAccumulator",
    "CorrelationEstimate",
    "run_trial",
    "run_trials",
    "aggregate",
    "rescale_ballistic",
]

#: relative conservation drift that gets a trial dropped
CONSERVATION_RTOL = 1e-6


@dataclass(frozen=True)
class MdPlan:
    """Experiment design for one MD correlation run."""

    gge: GgeParams
    n_pairs: int
    trials: int
    times: tuple[float, ...]
    fields: tuple[tuple[int, int], ...] = ((0, 0),)
    base_seed: int = 0
    tol: float = 1e-9
    current_convention: str = "paper"
    use_fft: bool = True
    n_max: int = 3

    def __post_init__(self) -> None:
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "fields", tuple((int(m), int(n)) for m, n in self.fields))
        if self.n_pairs < 2:
            raise ValueError("need N >= 2")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if not self.times or any(t < 0 for t in self.times):
            raise ValueError("times must be nonnegative")
        if any(b < a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be increasing")
        for m, n in self.fields:
            if not (0 <= m <= self.n_max and 0 <= n <= self.n_max):
                raise ValueError("field indices must lie in [0, n_max]")
        if self.current_convention not in ("paper", "continuity"):
            raise ValueError("unknown current convention")

    @property
    def n_sites(self) -> int:
        return 2 * self.n_pairs

    def field_indices(self) -> tuple[int, ...]:
        return tuple(sorted({k for pair in self.fields for k in pair}))


def _circular_product(qt: np.ndarray, q0: np.ndarray, use_fft: bool) -> np.ndarray:
    """P(j) = (1/2N) sum_i qt[i+j] q0[i] with periodic indexing."""
    n = qt.size
    if use_fft:
        out = np.fft.irfft(np.fft.rfft(qt) * np.conj(np.fft.rfft(q0)), n) / n
    else:
        out = np.empty(n)
        for j in range(n):
            out[j] = np.dot(np.roll(qt, -j), q0) / n
    return out


@dataclass
class _PairTimeSums:
    """Moment accumulators for one (field pair, snapshot time) cell.

    u_r = site-averaged product vector of trial r, a_r / b_r the site means
    of the two fields.  Everything the grand-mean estimator and its exact
    jackknife variance need is a polynomial in these, so plain sums suffice
    and merging is addition.
    """

    n_offsets: int
    sp: np.ndarray = field(init=False)
    sp2: np.ndarray = field(init=False)
    spa: np.ndarray = field(init=False)
    spb: np.ndarray = field(init=False)
    spab: np.ndarray = field(init=False)
    sa: float = 0.0
    sb: float = 0.0
    sa2: float = 0.0
    sb2: float = 0.0
    sab: float = 0.0
    sa2b: float = 0.0
    sab2: float = 0.0
    sa2b2: float = 0.0

    def __post_init__(self) -> None:
        z = np.zeros(self.n_offsets)
        self.sp = z.copy()
        self.sp2 = z.copy()
        self.spa = z.copy()
        self.spb = z.copy()
        self.spab = z.copy()

    def add(self, u: np.ndarray, a: float, b: float) -> None:
        self.sp += u
        self.sp2 += u * u
        self.spa += u * a
        self.spb += u * b
        self.spab += u * (a * b)
        self.sa += a
        self.sb += b
        self.sa2 += a * a
        self.sb2 += b * b
        self.sab += a * b
        self.sa2b += a * a * b
        self.sab2 += a * b * b
        self.sa2b2 += a * a * b * b

    def merge(self, other: "_PairTimeSums") -> None:
        for name in ("sp", "sp2", "spa", "spb", "spab"):
            getattr(self, name).__iadd__(getattr(other, name))
        for name in ("sa", "sb", "sa2", "sb2", "sab", "sa2b", "sab2", "sa2b2"):
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def estimate(self, r: int) -> tuple[np.ndarray, np.ndarray]:
        """Grand-mean estimate and jackknife standard error from R trials."""
        if r < 1:
            raise ValueError("no trials")
        s_hat = self.sp / r - (self.sa / r) * (self.sb / r)
        if r < 2:
            return s_hat, np.full(self.n_offsets, np.nan)
        al = 1.0 / (r - 1)
        ga = al * al
        # X_r = -al u_r + ga (SA b_r + SB a_r - a_r b_r); leave-one-out
        # estimates are X_r plus a constant, so var_J only needs X moments
        sx = -al * self.sp + ga * (2.0 * self.sa * self.sb - self.sab)
        sx2 = (
            al * al * self.sp2
            - 2.0 * al * ga * (self.sa * self.spb + self.sb * self.spa - self.spab)
            + ga * ga * (
                self.sa**2 * self.sb2
                + self.sb**2 * self.sa2
                + self.sa2b2
                + 2.0 * self.sa * self.sb * self.sab
                - 2.0 * self.sa * self.sab2
                - 2.0 * self.sb * self.sa2b
            )
        )
        var_j = (r - 1) / r * np.maximum(sx2 - sx * sx / r, 0.0)
        return s_hat, np.sqrt(var_j)

    def sum_estimate(self, r: int) -> tuple[float, float]:
        """Estimate and jackknife s.e. of sum_j S(j), the C sum rule.

        sum_j u_r(j) = n_offsets * a_r b_r, so the sum estimator is a plain
        covariance of the two site means and its jackknife only needs the
        scalar moment sums.
        """
        if r < 1:
            raise ValueError("no trials")
        n2 = self.n_offsets
        est = n2 * (self.sab / r - self.sa * self.sb / (r * r))
        if r < 2:
            return est, float("nan")
        al = 1.0 / (r - 1)
        ga = al * al
        # X_r = n2 [-(al + ga) a_r b_r + ga (SA b_r + SB a_r)]
        d = al + ga
        sx = n2 * (-d * self.sab + ga * 2.0 * self.sa * self.sb)
        sx2 = n2 * n2 * (
            d * d * self.sa2b2
            - 2.0 * d * ga * (self.sa * self.sab2 + self.sb * self.sa2b)
            + ga * ga * (
                self.sa**2 * self.sb2
                + 2.0 * self.sa * self.sb * self.sab
                + self.sb**2 * self.sa2
            )
        )
        var_j = (r - 1) / r * max(sx2 - sx * sx / r, 0.0)
        return est, var_j**0.5


@dataclass
class TrialAccumulator:
    """Mergeable partial sums over a set of trials."""

    plan: MdPlan
    n_ok: int = 0
    dropped: list = field(default_factory=list)
    cells: dict = field(default_factory=dict)
    #: sum over trials of the site mean of Q^[0] at each time (stationarity)
    q0_means: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        nt = len(self.plan.times)
        self.q0_means = np.zeros(nt)
        for pair in self.plan.fields:
            for ti in range(nt):
                self.cells[pair, ti] = _PairTimeSums(self.plan.n_sites)

    def merge(self, other: "TrialAccumulator") -> "TrialAccumulator":
        if other.plan != self.plan:
            raise ValueError("cannot merge accumulators from different plans")
        self.n_ok += other.n_ok
        self.dropped.extend(other.dropped)
        self.q0_means += other.q0_means
        for key, cell in self.cells.items():
            cell.merge(other.cells[key])
        return self


def _conserved_totals(state: LatticeState, n_top: int = 2) -> np.ndarray:
    return np.array([np.sum(local_fields(state, n)) for n in range(n_top + 1)])


def run_trial(plan: MdPlan, trial_index: int) -> TrialAccumulator:
    """One seeded trial: sample, integrate, accumulate products.

    A trial that fails to integrate or drifts off the conserved totals by
    more than CONSERVATION_RTOL relative is dropped and recorded.
    """
    acc = TrialAccumulator(plan)
    state0 = sample_gge(plan.gge, plan.n_pairs, plan.base_seed + trial_index)
    indices = plan.field_indices()
    q_at_0 = {k: local_fields(state0, k) for k in indices}
    totals0 = _conserved_totals(state0)
    scale = np.maximum(1.0, np.abs(totals0))
    state = state0
    try:
        for ti, t in enumerate(plan.times):
            if t > state.time:
                state = integrate(state, t, tol=plan.tol)
            q_at_t = q_at_0 if t == 0.0 else {k: local_fields(state, k) for k in indices}
            drift = np.abs(_conserved_totals(state) - totals0) / scale
            if np.any(drift > CONSERVATION_RTOL):
                raise IntegrationError(f"conservation drift {drift.max():.2e}")
            q0_t = q_at_t[0] if 0 in q_at_t else local_fields(state, 0)
            acc.q0_means[ti] = np.mean(q0_t)
            for pair in plan.fields:
                m, n = pair
                u = _circular_product(q_at_t[m], q_at_0[n], plan.use_fft)
                a = float(np.mean(q_at_t[m]))
                b = float(np.mean(q_at_0[n]))
                acc.cells[pair, ti].add(u, a, b)
    except IntegrationError as exc:
        fresh = TrialAccumulator(plan)
        fresh.dropped.append((trial_index, str(exc)))
        return fresh
    acc.n_ok = 1
    return acc


def run_trials(plan: MdPlan, start: int, count: int) -> TrialAccumulator:
    """Sequentially run ``count`` trials beginning at ``start`` and merge."""
    acc = TrialAccumulator(plan)
    for r in range(start, start + count):
        acc.merge(run_trial(plan, r))
    return acc


@dataclass
class CorrelationEstimate:
    """Aggregated S_{m,n}(j, t) with jackknife standard errors."""

    pair: tuple[int, int]
    offsets: np.ndarray
    times: tuple[float, ...]
    S: np.ndarray  # (n_times, n_offsets)
    stderr: np.ndarray
    n_trials: int

    def at_time(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        for ti, tt in enumerate(self.times):
            if tt == t:
                return self.S[ti], self.stderr[ti]
        raise ValueError(f"time {t} not sampled")


def aggregate(acc: TrialAccumulator) -> dict[tuple[int, int], CorrelationEstimate]:
    """Finalize estimates from merged partial sums."""
    if acc.n_ok < 1:
        raise ValueError("no successful trials to aggregate")
    plan = acc.plan
    n2 = plan.n_sites
    # offsets j in [-N, N): FFT order is j = 0..2N-1, roll to center
    offsets = np.arange(-plan.n_pairs, plan.n_pairs)
    out = {}
    for pair in plan.fields:
        S = np.empty((len(plan.times), n2))
        err = np.empty_like(S)
        for ti in range(len(plan.times)):
            s_hat, se = acc.cells[pair, ti].estimate(acc.n_ok)
            S[ti] = np.roll(s_hat, plan.n_pairs)
            err[ti] = np.roll(se, plan.n_pairs)
        out[pair] = CorrelationEstimate(
            pair=pair, offsets=offsets, times=plan.times,
            S=S, stderr=err, n_trials=acc.n_ok,
        )
    return out


def rescale_ballistic(est: CorrelationEstimate, t: float):
    """Ballistic rescaling: points (xi = j/t, value = t * S(j, t))."""
    if t <= 0:
        raise ValueError("rescaling needs t > 0")
    s, _ = est.at_time(t)
    return list(zip(est.offsets / t, t * s))


def estimate_rows(estimates: dict) -> list:
    """Rows for the estimate CSV: m,n,t,j,xi,S,tS,stderr."""
    rows = []
    for (m, n), est in sorted(estimates.items()):
        for ti, t in enumerate(est.times):
            xi = est.offsets / t if t > 0 else np.zeros_like(est.offsets, dtype=float)
            ts = t * est.S[ti] if t > 0 else est.S[ti]
            for k, j in enumerate(est.offsets):
                rows.append((m, n, t, int(j), xi[k], est.S[ti][k], ts[k], est.stderr[ti][k]))
    return rows


def run_metadata(acc: TrialAccumulator, wall_time: float) -> dict:
    plan = acc.plan
    return {
        "plan": {
            "beta": plan.gge.beta,
            "potential": list(plan.gge.potential),
            "n_pairs": plan.n_pairs,
            "trials": plan.trials,
            "times": list(plan.times),
            "fields": [list(p) for p in plan.fields],
            "base_seed": plan.base_seed,
            "tol": plan.tol,
            "current_convention": plan.current_convention,
        },
        "trials_ok": acc.n_ok,
        "trials_dropped": len(acc.dropped),
        "dropped": [[int(i), msg] for i, msg in acc.dropped[:100]],
        "stationarity_q0_mean": (acc.q0_means / max(acc.n_ok, 1)).tolist(),
        "wall_time_s": wall_time,
    }


def _timer() -> float:
    return _time.perf_counter()
