"""Markovian arrival processes with exponential (or expanded) marginals.

A MAP is a pair (D0, D1): D0 drives the phase process between events, D1
fires events.  The embedded chain P = (-D0)^{-1} D1 restarts the marginal
PH distribution (pi, D0), so correlation between successive inter-event
times is created by routing exit states back to entry states through a
coupling nu with row marginals psi and column marginals pi.

Canonical single-entry/single-exit chains cannot carry autocorrelation, so
they are first expanded into an order n(n+1)/2 representation that keeps
each of the n paths isolated, giving every path its own entry and exit
state.
"""

from __future__ import annotations

import random
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

from .coupling import Coupling, TransportProblem, monotone_coupling, solve_transport
from .errors import InvalidModelError, MarginalMismatchError, NotCanonicalError
from .phase_type import (
    DEFAULT_TOL,
    PhaseType,
    _mean_matrix,
    is_exponential,
    recognize_canonical,
)


class ReducibleChainWarning(UserWarning):
    """The embedded chain is reducible (normal at extreme couplings)."""


@dataclass(frozen=True)
class Map:
    """Markovian arrival process (D0, D1) with embedded stationary vector."""

    D0: np.ndarray
    D1: np.ndarray
    P: np.ndarray
    pi: np.ndarray
    phi: np.ndarray

    @property
    def order(self) -> int:
        return self.D0.shape[0]

    def marginal(self) -> PhaseType:
        return PhaseType(self.pi, self.D0)


@dataclass(frozen=True)
class PathExpansion:
    """Path-isolated representation of a canonical chain.

    Path i (1-based) consists of the i last phases of the chain; states are
    numbered path-major by increasing path length.  ``entry_states`` and
    ``exit_states`` are 0-based indices of e_i and f_i; ``upsilon`` are the
    path probabilities.
    """

    phd: PhaseType
    entry_states: np.ndarray
    exit_states: np.ndarray
    upsilon: np.ndarray


def path_expand(phd: PhaseType, tol: float = DEFAULT_TOL) -> PathExpansion:
    """Expand a canonical chain so each path has its own entry and exit.

    For the first canonical form path i runs the phases (mu_{n-i+1}, ...,
    mu_n) with probability pi(n-i+1); for the second form path i runs the
    prefix (mu_1, ..., mu_i) with its exit probability.  The result
    represents the same distribution on n(n+1)/2 states.
    """
    form = recognize_canonical(phd, tol)
    if not form:
        raise NotCanonicalError("path expansion needs a first or second canonical chain")
    n = phd.order
    mu = form.rates
    if form.tag == "first":
        paths = [mu[n - i : n] for i in range(1, n + 1)]
        probs = phd.pi[::-1].copy()
    else:
        paths = [mu[:i] for i in range(1, n + 1)]
        probs = phd.desc.psi.copy()
    total = n * (n + 1) // 2
    D = np.zeros((total, total))
    pi = np.zeros(total)
    entries = np.zeros(n, dtype=int)
    exits = np.zeros(n, dtype=int)
    pos = 0
    for i, path in enumerate(paths):
        k = len(path)
        entries[i] = pos
        exits[i] = pos + k - 1
        for step, r in enumerate(path):
            D[pos + step, pos + step] = -r
            if step + 1 < k:
                D[pos + step, pos + step + 1] = r
        pi[pos] = probs[i]
        pos += k
    return PathExpansion(
        phd=PhaseType(pi, D), entry_states=entries, exit_states=exits, upsilon=probs
    )


def _generator_irreducible(D0: np.ndarray, D1: np.ndarray) -> bool:
    """Strong connectivity of the D0+D1 transition graph (self-loops ignored)."""
    n = D0.shape[0]
    adj = (D0 > 1e-15) | (D1 > 1e-15)
    np.fill_diagonal(adj, False)
    count, _ = scipy.sparse.csgraph.connected_components(
        scipy.sparse.csr_matrix(adj), directed=True, connection="strong"
    )
    return count == 1


def _recurrent_classes(P: np.ndarray):
    """Strongly connected components of P with no outgoing edges."""
    n = P.shape[0]
    graph = scipy.sparse.csr_matrix(P > 1e-15)
    count, labels = scipy.sparse.csgraph.connected_components(
        graph, directed=True, connection="strong"
    )
    outgoing = np.zeros(count, dtype=bool)
    rows, cols = np.nonzero(P > 1e-15)
    for i, j in zip(rows, cols):
        if labels[i] != labels[j]:
            outgoing[labels[i]] = True
    return [np.nonzero(labels == c)[0] for c in range(count) if not outgoing[c]], labels


def _stationary_of_stochastic(P: np.ndarray) -> np.ndarray:
    n = P.shape[0]
    A = (P - np.eye(n)).T
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    pi = np.maximum(pi, 0.0)
    return pi / pi.sum()


def embedded_stationary(
    P: np.ndarray, start: np.ndarray | None = None
) -> tuple[np.ndarray, bool]:
    """Left fixed point of a row-stochastic P; handles reducible chains.

    For a reducible chain the stationary vectors of the recurrent classes
    are weighted by the probability of being absorbed into each class from
    ``start`` (required in that case).  Returns (pi, was_reducible).
    """
    n = P.shape[0]
    classes, labels = _recurrent_classes(P)
    if len(classes) == 1 and len(classes[0]) == n:
        return _stationary_of_stochastic(P), False
    if start is None:
        raise InvalidModelError("reducible embedded chain needs a start distribution")
    recurrent = np.concatenate(classes)
    transient = np.setdiff1d(np.arange(n), recurrent)
    pi = np.zeros(n)
    # absorption probability into each class from the transient part
    if transient.size:
        Q = P[np.ix_(transient, transient)]
        lhs = np.eye(transient.size) - Q
    for cls in classes:
        hit = np.zeros(n)
        hit[cls] = 1.0
        weight = float(start[cls].sum())
        if transient.size:
            rhs = P[np.ix_(transient, cls)].sum(axis=1)
            absorbed = np.linalg.solve(lhs, rhs)
            weight += float(start[transient] @ absorbed)
        sub = _stationary_of_stochastic(P[np.ix_(cls, cls)])
        pi[cls] += weight * sub
    pi = np.maximum(pi, 0.0)
    return pi / pi.sum(), True


def build_map(
    expansion: PathExpansion, nu: np.ndarray, tol: float = DEFAULT_TOL
) -> Map:
    """Assemble (D0, D1) from a path expansion and an exit-to-entry coupling.

    ``nu`` must have row sums psi' (the exit probabilities) and column sums
    pi'.  D1(i, :) spreads state i's exit rate over the entries according to
    nu(i, :)/psi'(i); the embedded stationary vector then equals pi', so the
    marginal distribution is the expansion itself.
    """
    phd = expansion.phd
    nu = np.asarray(nu, dtype=float)
    n = phd.order
    if nu.shape != (n, n):
        raise MarginalMismatchError(f"nu must be {n}x{n}")
    desc = phd.desc
    if np.any(np.abs(nu.sum(axis=1) - desc.psi) > max(tol, 1e-12)):
        raise MarginalMismatchError("row sums of nu must equal the exit probabilities")
    if np.any(np.abs(nu.sum(axis=0) - phd.pi) > max(tol, 1e-12)):
        raise MarginalMismatchError("column sums of nu must equal the initial vector")
    d0 = phd.d
    D1 = np.zeros((n, n))
    for i in range(n):
        if desc.psi[i] > 0 and d0[i] > 0:
            D1[i] = d0[i] * nu[i] / desc.psi[i]
    M = _mean_matrix(phd.D)
    P = M @ D1
    if not _generator_irreducible(phd.D, D1):
        warnings.warn(
            "D0 + D1 is reducible at this coupling; the embedded stationary "
            "vector was built from the recurrent classes weighted by initial "
            "reachability",
            ReducibleChainWarning,
            stacklevel=2,
        )
    pi, _ = embedded_stationary(P, start=phd.pi)
    phi = pi @ M
    phi = phi / phi.sum()
    return Map(D0=phd.D.copy(), D1=D1, P=P, pi=pi, phi=phi)


def autocorrelation(map_: Map, tol: float = DEFAULT_TOL) -> float:
    """Lag-1 autocorrelation of the inter-event times.

    Equals pi M P M 1 - 1 when the marginal is Exp(1); otherwise the general
    form (pi M P m - E^2)/sigma^2 with moments from the marginal.
    """
    M = _mean_matrix(map_.D0)
    m = M.sum(axis=1)
    raw = float(map_.pi @ M @ map_.P @ m)
    marginal = map_.marginal()
    if is_exponential(marginal, 1.0, max(tol, 1e-7)).passed:
        return raw - 1.0
    mean = float(map_.pi @ m)
    second = 2.0 * float(map_.pi @ M @ m)
    var = second - mean * mean
    return (raw - mean * mean) / var


def correlation_bounds(
    source: PathExpansion | PhaseType, solver: str = "simplex"
) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Extremes of sum nu(i,j) a(i) m(j) - 1 over exit/entry couplings.

    Rows carry (psi, a), columns (pi, m) of the representation.  Returns
    (rho_min, rho_max, nu_min, nu_max) with full-size coupling matrices.
    """
    phd = source.phd if isinstance(source, PathExpansion) else source
    desc = phd.desc
    a = np.nan_to_num(desc.a)
    problems = {
        sense: TransportProblem(
            u=desc.psi, v=phd.pi, alpha=a, beta=desc.m, sense=sense
        )
        for sense in ("min", "max")
    }
    solve = solve_transport if solver == "simplex" else monotone_coupling
    lo = solve(problems["min"])
    hi = solve(problems["max"])
    return lo.rho, hi.rho, lo.F, hi.F


def autocorr_bounds(
    source: PathExpansion | PhaseType, solver: str = "simplex"
) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Attainable autocorrelation range of a MAP built on ``source``."""
    return correlation_bounds(source, solver=solver)


@dataclass(frozen=True)
class Order2ScanReport:
    samples: int
    max_abs_bound: float
    passed: bool


def order2_impossibility_scan(
    num_samples: int = 10**4, seed: int = 42, tol: float = DEFAULT_TOL
) -> Order2ScanReport:
    """Check that random acyclic order-2 exponential representations are
    output- or input-inflexible: their coupling bounds are always (0, 0)."""
    from .builders import append_phase
    from .phase_type import unit_exponential

    rng = random.Random(seed)
    base = unit_exponential()
    worst = 0.0
    for _ in range(num_samples):
        p = rng.uniform(1e-6, 1.0 - 1e-6)
        q = rng.uniform(0.0, 1.0)
        rep = append_phase(base, p, q)
        lo, hi, _, _ = correlation_bounds(rep, solver="monotone")
        worst = max(worst, abs(lo), abs(hi))
    return Order2ScanReport(num_samples, worst, worst < tol)


def sample_intervals(
    map_: Map, count: int, seed: int = 42, start: str = "stationary"
) -> np.ndarray:
    """Simulate ``count`` inter-event times of the MAP.

    The phase process runs with total rate -D0(i,i); a transition is silent
    with probability D0(i,j)/rate and an event with probability
    D1(i,j)/rate.  One explicitly seeded generator per call.
    """
    n = map_.order
    rng = random.Random(seed)
    if start == "stationary":
        start_vec = map_.pi
    elif start == "phi":
        start_vec = map_.phi
    else:
        raise InvalidModelError("start must be 'stationary' or 'phi'")
    rates = [-map_.D0[i, i] for i in range(n)]
    # per-state transition tables: (cumulative prob, target, is_event)
    tables = []
    for i in range(n):
        entries = []
        acc = 0.0
        for j in range(n):
            if j != i and map_.D0[i, j] > 0:
                acc += map_.D0[i, j] / rates[i]
                entries.append((acc, j, False))
        for j in range(n):
            if map_.D1[i, j] > 0:
                acc += map_.D1[i, j] / rates[i]
                entries.append((acc, j, True))
        if entries:
            entries[-1] = (1.0, entries[-1][1], entries[-1][2])
        tables.append(entries)
    cum_start = np.cumsum(start_vec)
    state = int(np.searchsorted(cum_start, rng.random(), side="right"))
    state = min(state, n - 1)
    out = np.empty(count)
    clock = 0.0
    produced = 0
    expovariate = rng.expovariate
    uniform = rng.random
    while produced < count:
        clock += expovariate(rates[state])
        r = uniform()
        for threshold, target, is_event in tables[state]:
            if r <= threshold:
                state = target
                if is_event:
                    out[produced] = clock
                    produced += 1
                    clock = 0.0
                break
    return out
