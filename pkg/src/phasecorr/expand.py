"""Correlated hyperexponential and Erlang distributions.

Both families are built from exponential phases, so each phase can be
substituted by one of the correlated-exponential chains.  For a
hyperexponential with phase rates mu_i, substituting phase i by an order-n_i
optimal chain raises the attainable correlation from

    (E(T^2)/2 - E(T)^2) / sigma^2          (the unexpanded bound, < 1/2)

to  (sum_i pi(i) r(n_i)/mu_i^2 + E(T^2)/2 - E(T)^2) / sigma^2,

which tends to 1 as all n_i grow.  For an Erlang-k, substituting every stage
by an order-n chain gives C(n+k-1, k) distinguishable paths (stage entry
order is irrelevant); three expansions are provided: one state set per path
(for MAP use), merged common postfixes (single exit, for parallel
composition), and its time reversal (single entry, for sequential use).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .builders import harmonic_chain, optimal_positive_chain, reverse_transform, rho_plus_sequence
from .coupling import TransportProblem, monotone_coupling
from .errors import InfeasibleTargetError, InvalidModelError, NotCanonicalError
from .phase_type import DEFAULT_TOL, PhaseType, recognize_canonical, scale

ERLANG_STATE_GUARD = 10**5


@dataclass(frozen=True)
class HyperExp:
    """Hyperexponential distribution: diagonal D with strictly sorted rates."""

    pi: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        rates = np.asarray(self.rates, dtype=float)
        if pi.shape != rates.shape or pi.ndim != 1:
            raise InvalidModelError("pi and rates must be 1-D of equal length")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise InvalidModelError("pi must be a probability vector")
        if np.any(rates <= 0):
            raise InvalidModelError("rates must be positive")
        if np.any(np.diff(rates) <= 0):
            raise InvalidModelError("rates must be strictly increasing")
        var = 2.0 * np.sum(pi / rates**2) - float(np.sum(pi / rates)) ** 2
        if var < float(np.sum(pi / rates)) ** 2 - 1e-9:
            raise InvalidModelError("squared coefficient of variation must be >= 1")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "rates", rates)

    @property
    def order(self) -> int:
        return self.pi.shape[0]

    def moment(self, k: int) -> float:
        return math.factorial(k) * float(np.sum(self.pi / self.rates**k))

    @property
    def mean(self) -> float:
        return self.moment(1)

    @property
    def variance(self) -> float:
        return self.moment(2) - self.mean**2

    def to_phase_type(self) -> PhaseType:
        return PhaseType(self.pi, np.diag(-self.rates))


def hyperexp_rho_max(h: HyperExp) -> float:
    """Largest correlation of two identically represented hyperexponentials.

    Depends on the first two moments only: (sigma^2 - E^2) / (2 sigma^2),
    always below 1/2.
    """
    e = h.mean
    var = h.variance
    return 0.5 * (var - e * e) / var


def expand_hyperexp(
    h: HyperExp, allocation, sign: int = 1
) -> tuple[PhaseType, float]:
    """Substitute phase i by an order-n_i chain scaled to rate mu_i.

    ``sign=1`` uses optimal positive chains and returns the closed-form
    maximal correlation; ``sign=-1`` uses harmonic chains and returns the
    antitone-coupling minimal correlation of the expanded representation.
    """
    allocation = np.asarray(allocation, dtype=int)
    if allocation.shape != h.pi.shape or np.any(allocation < 1):
        raise InvalidModelError("allocation needs one integer >= 1 per phase")
    blocks = []
    pis = []
    rho_parts = []
    for prob, rate, n_i in zip(h.pi, h.rates, allocation):
        if sign > 0:
            chain, rho_i, _ = optimal_positive_chain(int(n_i))
        else:
            chain, _, rho_i = harmonic_chain(int(n_i))
        scaled = scale(chain, rate)
        blocks.append(scaled.D)
        pis.append(prob * scaled.pi)
        rho_parts.append(prob * rho_i / rate**2)
    total = int(allocation.sum())
    D = np.zeros((total, total))
    pos = 0
    for block in blocks:
        k = block.shape[0]
        D[pos : pos + k, pos : pos + k] = block
        pos += k
    expanded = PhaseType(np.concatenate(pis), D)
    e, e2, var = h.mean, h.moment(2), h.variance
    if sign > 0:
        rho = (math.fsum(rho_parts) + 0.5 * e2 - e * e) / var
    else:
        m = expanded.desc.m
        prob = TransportProblem(
            u=expanded.pi, v=expanded.pi, alpha=m, beta=m,
            sense="min", sigma_row=math.sqrt(var), sigma_col=math.sqrt(var),
        )
        rho = monotone_coupling(prob).rho
    return expanded, rho


def rho_from_representation(phd: PhaseType, mean: float, variance: float) -> float:
    """Comonotone-coupling correlation from a representation's m-vector.

    Evaluates (sum pi(i) m(i)^2 - mean^2) / variance directly on the built
    representation; cross-checks the closed form of expand_hyperexp.
    """
    m = phd.desc.m
    return (float(phd.pi @ (m * m)) - mean * mean) / variance


def greedy_allocate(
    h: HyperExp, rho_target: float, max_total: int = 10**5
) -> np.ndarray:
    """Grow per-phase chain orders one phase at a time until the target.

    Each step increments the phase maximising the correlation gain
    pi(i) (r(n_i+1) - r(n_i)) / mu_i^2 (ties to the lowest index); starts at
    the all-ones allocation.
    """
    if rho_target >= 1.0:
        raise InfeasibleTargetError("correlation targets must be below 1")
    alloc = np.ones(h.order, dtype=int)
    e, e2, var = h.mean, h.moment(2), h.variance
    base = 0.5 * e2 - e * e

    def current_rho() -> float:
        rhos = rho_plus_sequence(int(alloc.max()))
        part = sum(
            p * rhos[n_i - 1] / mu**2 for p, mu, n_i in zip(h.pi, h.rates, alloc)
        )
        return (part + base) / var

    while current_rho() < rho_target:
        if alloc.sum() >= max_total:
            raise InfeasibleTargetError(
                f"target {rho_target} needs more than {max_total} phases"
            )
        rhos = rho_plus_sequence(int(alloc.max()) + 1)
        gains = [
            p * (rhos[n_i] - rhos[n_i - 1]) / mu**2
            for p, mu, n_i in zip(h.pi, h.rates, alloc)
        ]
        alloc[int(np.argmax(gains))] += 1
    return alloc


# ---------------------------------------------------------------------------
# Erlang expansions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ErlangPath:
    """One unordered way to pass k substituted stages.

    ``entries`` are the chain phases entered per stage (sorted); ``rates``
    the sorted multiset of exponential rates passed; ``stage_rates`` the
    same rates in stage-concatenation order; ``prob`` the multinomial
    probability of the entry multiset.
    """

    entries: tuple[int, ...]
    rates: tuple[float, ...]
    stage_rates: tuple[float, ...]
    prob: float


@dataclass(frozen=True)
class ErlangExpansion:
    phd: PhaseType
    entry_states: np.ndarray
    exit_states: np.ndarray
    path_probs: np.ndarray

    @property
    def order(self) -> int:
        return self.phd.order


def _chain_data(chain: PhaseType, tol: float):
    form = recognize_canonical(chain, tol)
    if form.tag != "first":
        raise NotCanonicalError("Erlang expansion needs a first canonical chain")
    return form.rates, chain.pi


def erlang_paths(k: int, chain: PhaseType, tol: float = DEFAULT_TOL) -> list[ErlangPath]:
    """Enumerate the C(n+k-1, k) stage-entry multisets with probabilities.

    A stage entered at phase i passes the suffix (mu_i, ..., mu_n); the
    passing order across stages is irrelevant, so paths are unordered entry
    multisets in lexicographic order.
    """
    if k < 1:
        raise InvalidModelError("k must be >= 1")
    mu, pi = _chain_data(chain, tol)
    n = chain.order
    paths = []
    for combo in itertools.combinations_with_replacement(range(n), k):
        counts = np.bincount(combo, minlength=n)
        coeff = math.factorial(k)
        prob = 1.0
        for i, c in enumerate(counts):
            coeff //= math.factorial(int(c))
            prob *= pi[i] ** c
        rates = []
        for i in combo:
            rates.extend(mu[i:])
        paths.append(
            ErlangPath(
                entries=combo,
                rates=tuple(sorted(rates)),
                stage_rates=tuple(rates),
                prob=coeff * prob,
            )
        )
    return paths


def erlang_expand_full(k: int, chain: PhaseType, tol: float = DEFAULT_TOL) -> ErlangExpansion:
    """One isolated state line per path (usable as a MAP's D0).

    Phases within a path keep the stage-concatenation order; paths are laid
    out in lexicographic order of their entry multisets.
    """
    paths = erlang_paths(k, chain, tol)
    total = sum(len(p.rates) for p in paths)
    if total > ERLANG_STATE_GUARD:
        raise InvalidModelError(f"expansion would need {total} states")
    D = np.zeros((total, total))
    pi = np.zeros(total)
    entries = np.zeros(len(paths), dtype=int)
    exits = np.zeros(len(paths), dtype=int)
    pos = 0
    for idx, path in enumerate(paths):
        L = len(path.stage_rates)
        entries[idx] = pos
        exits[idx] = pos + L - 1
        for step, r in enumerate(path.stage_rates):
            D[pos + step, pos + step] = -r
            if step + 1 < L:
                D[pos + step, pos + step + 1] = r
        pi[pos] = path.prob
        pos += L
    probs = np.array([p.prob for p in paths])
    return ErlangExpansion(PhaseType(pi, D), entries, exits, probs)


def erlang_expand_in(k: int, chain: PhaseType, tol: float = DEFAULT_TOL) -> ErlangExpansion:
    """Merge common sorted-rate postfixes: single exit, one entry per path.

    Dropping the slowest element of a path's sorted rate multiset lands on
    the path whose entry multiset moved that stage one phase later, except
    for the all-last path, whose tail (mu_n repeated) is shared.  This gives
    C(n+k-1, k) entry states plus k-1 tail states, the last of which is the
    single output; entry means decrease along the lexicographic path order.
    """
    mu, _ = _chain_data(chain, tol)
    n = chain.order
    paths = erlang_paths(k, chain, tol)
    index_of = {p.entries: i for i, p in enumerate(paths)}
    P = len(paths)
    total = P + k - 1
    if total > ERLANG_STATE_GUARD:
        raise InvalidModelError(f"expansion would need {total} states")
    D = np.zeros((total, total))
    pi = np.zeros(total)
    # tail states mu_n^{k-1}, ..., mu_n^1 occupy positions P .. P+k-2
    for t in range(k - 1):
        D[P + t, P + t] = -mu[-1]
        if t + 1 < k - 1:
            D[P + t, P + t + 1] = mu[-1]
    for idx, path in enumerate(paths):
        pi[idx] = path.prob
        first = path.entries[0]
        rate = mu[first]
        D[idx, idx] = -rate
        if first == n - 1:
            # all stages enter the last phase: continue into the shared tail
            if k > 1:
                D[idx, P] = rate
        else:
            successor = list(path.entries)
            successor[0] = first + 1
            D[idx, index_of[tuple(sorted(successor))]] = rate
    entries = np.arange(P)
    exits = np.array([total - 1 if k > 1 else P - 1])
    probs = np.array([p.prob for p in paths])
    return ErlangExpansion(PhaseType(pi, D), entries, exits, probs)


def erlang_expand_out(k: int, chain: PhaseType, tol: float = DEFAULT_TOL) -> ErlangExpansion:
    """Time reversal of the merged form: single entry, one exit per path.

    The exit-state a-vector equals the entry-state m-vector of the merged
    form, so sequential composition of an out-form with an in-form carries
    the same correlation range as the parallel coupling.
    """
    merged = erlang_expand_in(k, chain, tol)
    reversed_phd = reverse_transform(merged.phd)
    total = merged.order
    entries = np.array([0])
    exits = (total - 1) - merged.entry_states
    return ErlangExpansion(reversed_phd, entries, exits, merged.path_probs.copy())


def normalized_erlang_chain(k: int, n: int) -> PhaseType:
    """Order-n optimal chain scaled for one stage of a unit-mean Erlang-k."""
    chain, _, _ = optimal_positive_chain(n)
    return scale(chain, float(k))
