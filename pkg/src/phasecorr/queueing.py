"""Two queueing applications of correlated phase-type representations.

1. A single-server FCFS queue with exponential inter-arrival and service
   times whose correlation is prescribed: the service chain is a first
   canonical representation, the arrival process its time reversal (second
   canonical), and the exit phase of each arrival selects a per-class
   service initial vector.  Analysed by discrete-event simulation.

2. A Poisson queue whose jobs are pairs of exponential tasks with
   correlated processing times: the composed service distribution is an
   explicit PH representation, so the mean-value analysis is the classic
   M/G/1 Pollaczek-Khinchine formula driven by its first two moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .builders import (
    harmonic_chain,
    harmonic_rho_minus,
    min_phases_for_rho,
    optimal_positive_chain,
    reverse_transform,
    rho_plus_sequence,
)
from .coupling import TransportProblem, monotone_coupling, target_coupling, to_transfer_matrix
from .errors import InfeasibleTargetError, InvalidModelError
from .phase_type import PhaseType, scale, seq_compose, topological_order, unit_exponential


# ---------------------------------------------------------------------------
# bulk sampling of acyclic phase-type variates
# ---------------------------------------------------------------------------


def sample_acyclic(
    phd: PhaseType,
    size: int,
    rng: np.random.Generator,
    start_states: np.ndarray | None = None,
):
    """Draw ``size`` variates by explicit phase simulation.

    Returns (times, exit_states); the exit state is the last transient state
    before absorption, which is what the class mechanism of the correlated
    queue needs.  States are processed in topological order so one sweep
    suffices.
    """
    n = phd.order
    order = topological_order(phd.D)
    if order is None:
        raise InvalidModelError("bulk sampler needs an acyclic representation")
    position = np.empty(n, dtype=int)
    position[order] = np.arange(n)
    Dp = phd.D[np.ix_(order, order)]
    rates = -np.diag(Dp)

    if start_states is None:
        cum = np.cumsum(phd.pi)
        cum[-1] = 1.0
        start = np.searchsorted(cum, rng.random(size), side="right")
        start = np.minimum(start, n - 1)
    else:
        start = np.asarray(start_states, dtype=int)
    cur = position[start]
    times = np.zeros(size)
    exit_states = np.full(size, -1, dtype=int)
    for s in range(n):
        mask = cur == s
        count = int(mask.sum())
        if count == 0:
            continue
        times[mask] += rng.exponential(1.0 / rates[s], count)
        idx = np.nonzero(mask)[0]
        row = Dp[s].copy()
        row[s] = 0.0
        targets = np.nonzero(row > 0)[0]
        if len(targets) == 0:
            exit_states[idx] = order[s]
            cur[mask] = n
            continue
        probs = row[targets] / rates[s]
        cum = np.concatenate([np.cumsum(probs), [1.0]])
        pick = np.searchsorted(cum, rng.random(count), side="right")
        nxt = np.where(pick < len(targets), targets[np.minimum(pick, len(targets) - 1)], n)
        exiting = nxt == n
        exit_states[idx[exiting]] = order[s]
        cur[mask] = nxt
    return times, exit_states


# ---------------------------------------------------------------------------
# model construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelatedMM1Model:
    """PH/PH/1 queue with classes carrying arrival-service correlation."""

    lam_a: float
    lam_s: float
    rho: float
    arrival: PhaseType
    service: PhaseType
    beta: np.ndarray  # one service initial vector per arrival exit class

    @property
    def utilisation(self) -> float:
        return self.lam_a / self.lam_s


def build_correlated_mm1(lam_a: float, lam_s: float, rho: float) -> CorrelatedMM1Model:
    """Size and assemble the correlated M/M/1 model for target ``rho``.

    The service chain is the optimal (rho > 0) or harmonic (rho < 0) first
    canonical representation of the smallest adequate order; the arrival
    representation is its time reversal.  A customer leaving the arrival
    chain from exit class k starts service from
    w e_{sigma(k)} + (1-w) pi with w = rho/rho_extreme and sigma the
    comonotone (rho > 0) or antitone (rho < 0) pairing of exit absorption
    times with entry means.
    """
    if lam_a <= 0 or lam_s <= 0:
        raise InvalidModelError("rates must be positive")
    if lam_a >= lam_s:
        raise InfeasibleTargetError("utilisation must be below 1")
    if rho == 0:
        exp_a = unit_exponential(lam_a)
        exp_s = unit_exponential(lam_s)
        return CorrelatedMM1Model(lam_a, lam_s, 0.0, exp_a, exp_s, np.ones((1, 1)))
    n = min_phases_for_rho(rho)
    if rho > 0:
        chain, rho_ext, _ = optimal_positive_chain(n)
        sigma = np.arange(n)[::-1]
    else:
        chain, _, rho_ext = harmonic_chain(n)
        sigma = np.arange(n)
    weight = rho / rho_ext
    beta = np.empty((n, n))
    for k in range(n):
        beta[k] = (1.0 - weight) * chain.pi
        beta[k, sigma[k]] += weight
    arrival = scale(reverse_transform(chain), lam_a)
    service = scale(chain, lam_s)
    return CorrelatedMM1Model(lam_a, lam_s, rho, arrival, service, beta)


def poisson_ph_model(lam_a: float, service: PhaseType) -> CorrelatedMM1Model:
    """M/PH/1 special case: Poisson arrivals, one class, any PH service."""
    if lam_a * service.mean >= 1.0:
        raise InfeasibleTargetError("utilisation must be below 1")
    return CorrelatedMM1Model(
        lam_a=lam_a,
        lam_s=1.0 / service.mean,
        rho=0.0,
        arrival=unit_exponential(lam_a),
        service=service,
        beta=service.pi[np.newaxis, :].copy(),
    )


# ---------------------------------------------------------------------------
# discrete-event simulation (FCFS, single server)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimStats:
    L: float
    W: float
    qlen_dist: np.ndarray
    realized_corr: float
    ci_L: float
    ci_W: float
    se_corr: float
    served: int
    realized_arrival_mean: float
    realized_service_mean: float
    se_arrival_mean: float
    se_service_mean: float


def _batch_halfwidth(values: np.ndarray, batches: int = 20) -> float:
    """95% CI half-width of the mean by batch means."""
    usable = (len(values) // batches) * batches
    if usable == 0:
        return float("inf")
    means = values[:usable].reshape(batches, -1).mean(axis=1)
    return 1.96 * float(means.std(ddof=1)) / math.sqrt(batches)


def _batch_corr_se(x: np.ndarray, y: np.ndarray, batches: int = 20) -> float:
    usable = (len(x) // batches) * batches
    xs = x[:usable].reshape(batches, -1)
    ys = y[:usable].reshape(batches, -1)
    corrs = []
    for bx, by in zip(xs, ys):
        sx, sy = bx.std(), by.std()
        if sx > 0 and sy > 0:
            corrs.append(float(np.mean((bx - bx.mean()) * (by - by.mean())) / (sx * sy)))
    corrs = np.array(corrs)
    return float(corrs.std(ddof=1)) / math.sqrt(len(corrs))


def simulate_correlated_mm1(
    model: CorrelatedMM1Model,
    num_customers: int,
    warmup: int | None = None,
    seed: int = 42,
) -> SimStats:
    """Event-driven FCFS simulation with per-class service start vectors.

    Arrivals are renewals of the arrival representation; the exit phase of
    the renewal that produced customer i selects the row of ``beta`` from
    which customer i's service chain is started.  Confidence intervals use
    batch means over 20 batches after the warmup.
    """
    if warmup is None:
        warmup = num_customers // 10
    if warmup >= num_customers:
        raise InvalidModelError("warmup must leave customers to count")
    rng = np.random.default_rng(seed)
    inter, exit_class = sample_acyclic(model.arrival, num_customers, rng)
    arrivals = np.cumsum(inter)

    n_classes = model.beta.shape[0]
    start = np.empty(num_customers, dtype=int)
    draws = rng.random(num_customers)
    for k in range(n_classes):
        mask = exit_class == k
        if not np.any(mask):
            continue
        cum = np.cumsum(model.beta[k])
        cum[-1] = 1.0
        start[mask] = np.searchsorted(cum, draws[mask], side="right")
    start = np.minimum(start, model.service.order - 1)
    service, _ = sample_acyclic(model.service, num_customers, rng, start_states=start)

    # Lindley recursion, vectorised: waits are the reflected running sum
    increments = service[:-1] - inter[1:]
    c = np.concatenate([[0.0], np.cumsum(increments)])
    wait = c - np.minimum.accumulate(c)
    sojourn = wait + service
    departures = arrivals + sojourn

    t0 = arrivals[warmup]
    t1 = arrivals[-1]
    window = t1 - t0
    # piecewise-constant N(t) between t0 and t1
    events = np.concatenate([arrivals, departures])
    steps = np.concatenate([np.ones(num_customers), -np.ones(num_customers)])
    order = np.argsort(events, kind="stable")
    events = events[order]
    levels = np.cumsum(steps[order])
    inside = (events >= t0) & (events < t1)
    ev_in = events[inside]
    lv_in = levels[inside]
    n_at_t0 = levels[np.searchsorted(events, t0, side="right") - 1] if np.any(events <= t0) else 0
    seg_t = np.concatenate([[t0], ev_in, [t1]])
    seg_n = np.concatenate([[n_at_t0], lv_in]).astype(int)
    dt = np.diff(seg_t)
    area = float(np.dot(seg_n, dt))
    L = area / window
    max_n = int(seg_n.max())
    qlen = np.bincount(seg_n, weights=dt, minlength=max_n + 1) / window

    # CI for L from 20 time slices: exact slice areas via the cumulative
    # area function evaluated at the slice edges
    cum_area = np.concatenate([[0.0], np.cumsum(seg_n * dt)])
    slice_edges = np.linspace(t0, t1, 21)
    k = np.clip(np.searchsorted(seg_t, slice_edges, side="right") - 1, 0, len(dt) - 1)
    area_at = cum_area[k] + seg_n[k] * (slice_edges - seg_t[k])
    slice_means = np.diff(area_at) / np.diff(slice_edges)
    ci_L = 1.96 * float(slice_means.std(ddof=1)) / math.sqrt(20)

    w_tail = sojourn[warmup:]
    inter_tail = inter[warmup:]
    serv_tail = service[warmup:]
    W = float(w_tail.mean())
    ci_W = _batch_halfwidth(w_tail)
    corr = float(np.corrcoef(inter_tail, serv_tail)[0, 1])
    se_corr = _batch_corr_se(inter_tail, serv_tail)
    return SimStats(
        L=L,
        W=W,
        qlen_dist=qlen,
        realized_corr=corr,
        ci_L=ci_L,
        ci_W=ci_W,
        se_corr=se_corr,
        served=num_customers - warmup,
        realized_arrival_mean=float(inter_tail.mean()),
        realized_service_mean=float(serv_tail.mean()),
        se_arrival_mean=_batch_halfwidth(inter_tail) / 1.96,
        se_service_mean=_batch_halfwidth(serv_tail) / 1.96,
    )


# ---------------------------------------------------------------------------
# correlated task pairs and the M/G/1 mean-value analysis
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelatedTaskService:
    """Service distribution of a two-task job with correlated task times."""

    lam_s: float
    rho: float
    phd: PhaseType
    mean: float
    second_moment: float


def correlated_task_service(lam_s: float, rho: float) -> CorrelatedTaskService:
    """Sequentially compose two correlated exponential halves of mean 1/(2 lam_s).

    The first half runs in the second canonical form (time reversal), the
    second in the first canonical form; the transfer matrix interpolates
    between independence and the extreme coupling to hit ``rho`` exactly.
    The job's second moment is (1.5 + 0.5 rho)/lam_s^2.
    """
    if lam_s <= 0:
        raise InvalidModelError("service rate must be positive")
    if rho == 0:
        n = 1
        chain = unit_exponential()
        rho_ext = 1.0  # unused; weight is 0
    elif rho > 0:
        n = min_phases_for_rho(rho)
        chain, rho_ext, _ = optimal_positive_chain(n)
    else:
        n = min_phases_for_rho(rho)
        chain, _, rho_ext = harmonic_chain(n)
    x = reverse_transform(chain)
    dx = x.desc
    dy = chain.desc
    problem = TransportProblem(
        u=dx.psi,
        v=chain.pi,
        alpha=np.nan_to_num(dx.a),
        beta=dy.m,
        sense="max" if rho >= 0 else "min",
    )
    extreme = monotone_coupling(problem)
    flow = target_coupling(extreme.F, extreme.rho, dx.psi, chain.pi, rho, problem)
    transfer = to_transfer_matrix(flow.F, dx.psi)
    rate = 2.0 * lam_s
    composed, realized = seq_compose(scale(x, rate), scale(chain, rate), transfer)
    return CorrelatedTaskService(
        lam_s=lam_s,
        rho=realized,
        phd=composed,
        mean=composed.mean,
        second_moment=composed.moment(2),
    )


def mg1_pk(lam_a: float, service: CorrelatedTaskService) -> tuple[float, float]:
    """Pollaczek-Khinchine mean values: returns (L, W).

    W_q = lam_a E(S^2) / (2 (1-U)); L = U + lam_a W_q; W = W_q + E(S).
    """
    util = lam_a * service.mean
    if util >= 1.0:
        raise InfeasibleTargetError("utilisation must be below 1")
    wq = lam_a * service.second_moment / (2.0 * (1.0 - util))
    w = wq + service.mean
    return util + lam_a * wq, w
