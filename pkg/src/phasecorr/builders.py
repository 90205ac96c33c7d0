"""Builders for acyclic phase-type representations of Exp(1).

All constructions here produce representations whose absorption time is a
unit exponential; what varies is how much correlation a coupling of two such
representations can realise.  The main families are:

* the stepwise-optimal positive chain, first canonical with rates
  mu_k = 2/(1 - r(k-1)) where r obeys r(n+1) = r(n) + (1-r(n))^2/4;
* the harmonic chain with rates mu_i = i (uniform initial vector), which is
  stepwise optimal for negative correlation;
* a 3-phase construction that beats the harmonic chain's negative bound,
  showing the stepwise rule is not globally optimal.

The time-reversal transform maps the first canonical form onto the second
(single-entry) form, exchanging entry and exit descriptors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coupling import TransportProblem, monotone_coupling
from .errors import InfeasibleTargetError, InvalidModelError
from .phase_type import (
    DEFAULT_TOL,
    PhaseType,
    descriptors,
    recognize_canonical,
    unit_exponential,
)

RHO_MINUS_LIMIT = 1.0 - math.pi**2 / 6.0  # infimum of the negative bound


@dataclass(frozen=True)
class ChainSpec:
    """Parameters of a stepwise-built chain, kept for independent checks."""

    n: int
    rates: tuple[float, ...]
    p: tuple[float, ...]
    q: tuple[float, ...]
    rho: float


def rho_plus_sequence(n: int) -> np.ndarray:
    """Optimal-chain bounds r(1..n): r(1)=0, r(k+1) = r(k) + (1-r(k))^2/4."""
    if n < 1:
        raise InvalidModelError("n must be >= 1")
    out = np.empty(n)
    r = 0.0
    for k in range(n):
        out[k] = r
        r = r + 0.25 * (1.0 - r) ** 2
    return out


def harmonic_rho_plus(n: int) -> float:
    """Positive bound 1 - H_n/n of the harmonic (rates mu_i = i) chain."""
    return 1.0 - math.fsum(1.0 / i for i in range(1, n + 1)) / n


def harmonic_rho_minus(n: int) -> float:
    """Negative bound 1 - sum_{i<=n} 1/i^2 of the harmonic chain."""
    return 1.0 - math.fsum(1.0 / (i * i) for i in range(1, n + 1))


def first_canonical_from_rates(rates, tol: float = DEFAULT_TOL) -> PhaseType:
    """First canonical representation of Exp(1) with the given rates.

    The initial vector is the closed form pi(i) = (1/mu_i) prod_{j>i}
    (1 - 1/mu_j); it is a probability vector iff mu_1 = 1 and mu_j >= 1.
    """
    mu = np.asarray(rates, dtype=float)
    n = mu.shape[0]
    if n < 1:
        raise InvalidModelError("need at least one rate")
    if abs(mu[0] - 1.0) > tol:
        raise InvalidModelError("the first rate must be 1 for a unit exponential")
    if np.any(mu < 1.0 - tol):
        raise InvalidModelError("rates below 1 would force negative initial mass")
    mu = np.maximum(mu, 1.0)
    tail = np.concatenate([np.cumprod((1.0 - 1.0 / mu)[::-1])[::-1][1:], [1.0]])
    pi = tail / mu
    D = np.diag(-mu)
    if n > 1:
        D[np.arange(n - 1), np.arange(n - 1) + 1] = mu[:-1]
    return PhaseType(pi, D)


def append_phase(phd: PhaseType, p: float, q: float) -> PhaseType:
    """Append one phase keeping the unit-exponential marginal.

    New initial vector ((1-p)pi, p), feed column (1-q)d and rate
    mu = (1-q+pq)/p.  With q=0 this grows the first canonical form.
    """
    if not (0.0 < p < 1.0):
        raise InvalidModelError("p must lie in (0, 1)")
    if not (0.0 <= q <= 1.0):
        raise InvalidModelError("q must lie in [0, 1]")
    n = phd.order
    mu = (1.0 - q + p * q) / p
    D = np.zeros((n + 1, n + 1))
    D[:n, :n] = phd.D
    D[:n, n] = (1.0 - q) * phd.d
    D[n, n] = -mu
    pi = np.concatenate([(1.0 - p) * phd.pi, [p]])
    return PhaseType(pi, D)


def append_descriptor_update(
    m: np.ndarray, psi: np.ndarray, a: np.ndarray, p: float, q: float
):
    """Closed-form (m', psi', a') after an append step, for cross-checks."""
    mu = (1.0 - q + p * q) / p
    m_new = np.concatenate([m + (1.0 - q) / mu, [1.0 / mu]])
    # note: the exit mass of the new state is 1-q+pq (= p*mu), which restores
    # sum(psi') = 1; see the conservation argument in the tests
    psi_new = np.concatenate([(1.0 - p) * q * psi, [1.0 - q + p * q]])
    a_new = np.concatenate([a, [1.0]])
    return m_new, psi_new, a_new


def prepend_phase(phd: PhaseType, p: float, mu: float) -> PhaseType:
    """Prepend one phase keeping the unit-exponential marginal.

    New initial vector (p, (1-p)pi) and first row (-mu, (mu-1)pi).  Choosing
    p = 1 and mu at least the current top rate keeps the single-entry
    (second canonical) structure.
    """
    if not (0.0 <= p <= 1.0):
        raise InvalidModelError("p must lie in [0, 1]")
    if mu < 1.0:
        raise InvalidModelError("mu must be >= 1")
    n = phd.order
    D = np.zeros((n + 1, n + 1))
    D[0, 0] = -mu
    D[0, 1:] = (mu - 1.0) * phd.pi
    D[1:, 1:] = phd.D
    pi = np.concatenate([[p], (1.0 - p) * phd.pi])
    return PhaseType(pi, D)


def prepend_descriptor_update(
    m: np.ndarray, psi: np.ndarray, a: np.ndarray, p: float, mu: float
):
    """Closed-form (m', psi', a') after a prepend step, for cross-checks."""
    m_new = np.concatenate([[1.0], m])
    psi_new = np.concatenate([[p / mu], (mu - p) / mu * psi])
    a_new = np.concatenate([[1.0 / mu], a + p * (mu - 1.0) / (mu * (mu - p))])
    return m_new, psi_new, a_new


def optimal_positive_chain(n: int) -> tuple[PhaseType, float, ChainSpec]:
    """Stepwise-optimal chain for positive correlation, with its bound."""
    if n < 1:
        raise InvalidModelError("n must be >= 1")
    rho_seq = rho_plus_sequence(n)
    phd = unit_exponential()
    ps = []
    for k in range(1, n):
        p = (1.0 - rho_seq[k - 1]) / 2.0
        phd = append_phase(phd, p, 0.0)
        ps.append(p)
    rates = tuple(-np.diag(phd.D))
    spec = ChainSpec(n=n, rates=rates, p=tuple(ps), q=(0.0,) * len(ps), rho=float(rho_seq[-1]))
    return phd, float(rho_seq[-1]), spec


def harmonic_chain(n: int) -> tuple[PhaseType, float, float]:
    """Chain with rates mu_i = i; returns (phd, rho_plus, rho_minus)."""
    if n < 1:
        raise InvalidModelError("n must be >= 1")
    phd = first_canonical_from_rates(np.arange(1.0, n + 1.0))
    return phd, harmonic_rho_plus(n), harmonic_rho_minus(n)


def min_phases_for_rho(
    rho_target: float, chain: str = "auto", max_n: int = 10**6
) -> int:
    """Smallest order whose bound reaches ``rho_target``.

    Positive targets use the optimal chain (or the harmonic chain when
    ``chain='harmonic'``); negative targets use the harmonic chain's bound
    1 - sum 1/i^2, which cannot go below 1 - pi^2/6.
    """
    if not (RHO_MINUS_LIMIT < rho_target < 1.0):
        raise InfeasibleTargetError(
            f"target {rho_target} outside the attainable interval "
            f"({RHO_MINUS_LIMIT:.7f}, 1)"
        )
    if chain not in ("auto", "optimal", "harmonic"):
        raise InvalidModelError("chain must be 'auto', 'optimal' or 'harmonic'")
    if rho_target < 0 and chain == "optimal":
        raise InvalidModelError("negative targets are sized with the harmonic chain")
    if rho_target >= 0:
        if chain in ("auto", "optimal"):
            r = 0.0
            for n in range(1, max_n + 1):
                if r >= rho_target:
                    return n
                r = r + 0.25 * (1.0 - r) ** 2
        else:
            acc = []
            for n in range(1, max_n + 1):
                acc.append(1.0 / n)
                if 1.0 - math.fsum(acc) / n >= rho_target:
                    return n
    else:
        acc = []
        for n in range(1, max_n + 1):
            acc.append(1.0 / (n * n))
            if 1.0 - math.fsum(acc) <= rho_target:
                return n
    raise InfeasibleTargetError(f"target {rho_target} not reached within {max_n} phases")


def reverse_transform(phd: PhaseType) -> PhaseType:
    """Time-reverse a representation: exits become entries and vice versa.

    The reversed chain has mu'(i,j) = mu(j,i) phi(j)/phi(i) and initial
    vector psi; the state order is then flipped so acyclic inputs stay upper
    triangular.  Applied to a first canonical representation of Exp(1) this
    yields the second canonical form with couplings mu_i - 1.
    """
    desc = phd.desc
    if np.any(desc.phi <= 0):
        dead = np.nonzero(desc.phi <= 0)[0]
        raise InvalidModelError(
            f"phi vanishes on states {dead.tolist()}; drop unreachable phases first"
        )
    n = phd.order
    ratio = np.outer(1.0 / desc.phi, desc.phi)  # ratio[i, j] = phi(j)/phi(i)
    D_rev = phd.D.T * ratio
    np.fill_diagonal(D_rev, np.diag(phd.D))
    flip = np.arange(n)[::-1]
    return PhaseType(desc.psi[flip], D_rev[np.ix_(flip, flip)])


def rho_gradient(phd: PhaseType) -> np.ndarray:
    """Derivatives of sum pi(i) m(i)^2 - 1 w.r.t. 1/mu_i on a first canonical chain.

    Entry i of the result is d rho / d(mu_i^{-1}); index 0 (the forced
    mu_1 = 1) is reported as NaN.  On the stepwise-optimal chain entries
    1..n-1 vanish.
    """
    form = recognize_canonical(phd)
    if form.tag != "first":
        raise InvalidModelError("gradient is defined for first canonical chains")
    mu = form.rates
    pi = phd.pi
    m = phd.desc.m
    n = phd.order
    grad = np.full(n, np.nan)
    for i in range(1, n):
        own = pi[i] * (mu[i] * m[i] + 2.0) * m[i]
        upstream = 0.0
        for j in range(i):
            upstream += pi[j] * m[j] * (2.0 - m[j] * mu[i] / (mu[i] - 1.0))
        grad[i] = own + upstream
    return grad


def chain_rho_from_inverse_rates(x: np.ndarray) -> float:
    """sum pi m^2 - 1 for the first canonical chain with 1/mu vector ``x``.

    ``x[0]`` must be 1; used as the finite-difference oracle target for the
    gradient and by the negative searches.
    """
    mu = 1.0 / np.asarray(x, dtype=float)
    phd = first_canonical_from_rates(mu)
    m = phd.desc.m
    return float(phd.pi @ (m * m)) - 1.0


def _parallel_min_rho(phd: PhaseType) -> float:
    """Antitone parallel-coupling correlation of a representation with itself."""
    m = phd.desc.m
    prob = TransportProblem(u=phd.pi, v=phd.pi, alpha=m, beta=m, sense="min")
    return monotone_coupling(prob).rho


def negative_step_objective(phd: PhaseType, p: float, q: float) -> float:
    """Minimal parallel correlation after appending one (p, q) phase."""
    return _parallel_min_rho(append_phase(phd, p, q))


def _golden_section(f, lo: float, hi: float, tol: float):
    """Golden-section minimisation on [lo, hi]; returns (x*, f(x*))."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = (a + b) / 2.0
    return x, f(x)


def negative_step_search(
    phd: PhaseType, grid: int = 21, refine_tol: float = 1e-9
) -> tuple[float, float, float]:
    """Search (p, q) for the appended phase minimising the parallel correlation.

    Coarse grid scan over (0,1) x [0,1], then golden-section refinement of p
    and q in turn around the best grid point.  Returns (p*, q*, rho*).
    """
    ps = np.linspace(0.0, 1.0, grid + 2)[1:-1]
    qs = np.linspace(0.0, 1.0, grid)
    best = (ps[0], qs[0], np.inf)
    for q in qs:
        for p in ps:
            val = negative_step_objective(phd, p, q)
            if val < best[2]:
                best = (p, q, val)
    p0, q0, _ = best
    step_p = ps[1] - ps[0]
    step_q = qs[1] - qs[0] if grid > 1 else 1.0
    p_lo, p_hi = max(1e-9, p0 - step_p), min(1.0 - 1e-9, p0 + step_p)
    p_star, _ = _golden_section(
        lambda p: negative_step_objective(phd, p, q0), p_lo, p_hi, refine_tol
    )
    q_lo, q_hi = max(0.0, q0 - step_q), min(1.0, q0 + step_q)
    q_star, rho_star = _golden_section(
        lambda q: negative_step_objective(phd, p_star, q), q_lo, q_hi, refine_tol
    )
    if negative_step_objective(phd, p_star, 0.0) <= rho_star:
        q_star = 0.0
        rho_star = negative_step_objective(phd, p_star, 0.0)
    return float(p_star), float(q_star), float(rho_star)


@dataclass(frozen=True)
class Negative3Result:
    phd: PhaseType
    rho: float
    mu2: float
    mu3: float
    constraint_residual: float


def negative3_rho(mu3: float) -> float:
    """Antitone parallel correlation of the symmetric 3-phase chain at mu3."""
    mu2 = (mu3 - 1.0) / (mu3 - 2.0)
    phd = first_canonical_from_rates([1.0, mu2, mu3])
    return _parallel_min_rho(phd)


def negative3_special(bracket=(2.62, 6.0), tol: float = 1e-10) -> Negative3Result:
    """3-phase chain with pi(1) = pi(3) beating the harmonic negative bound.

    The symmetry pins mu_2 = (mu_3-1)/(mu_3-2) and leaves a smooth unimodal
    1-D objective over mu_3 > (3+sqrt(5))/2, minimised by golden section.
    """
    mu3, rho = _golden_section(negative3_rho, bracket[0], bracket[1], tol)
    mu2 = (mu3 - 1.0) / (mu3 - 2.0)
    phd = first_canonical_from_rates([1.0, mu2, mu3])
    residual = abs((1.0 - 1.0 / mu2) * (1.0 - 1.0 / mu3) - 1.0 / mu3)
    return Negative3Result(phd=phd, rho=rho, mu2=mu2, mu3=mu3, constraint_residual=residual)
