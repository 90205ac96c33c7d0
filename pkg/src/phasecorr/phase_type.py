"""Dense linear algebra for phase-type distributions.

A phase-type (PH) distribution is the time to absorption of a CTMC with
transient states only in its sub-generator ``D`` and initial row vector
``pi``.  Everything the correlation machinery needs is derived from a small
set of descriptor vectors:

    M   = -D^{-1}            mean time spent in each state per start state
    m   = M 1                conditional means given the entry state
    d   = -D 1               exit rates into the absorbing state
    B   = M diag(d)          absorption-state probabilities per start state
    psi = pi B               exit probabilities per state
    a   = (pi M B(:,i)) / psi(i)   mean absorption time given the exit state
    phi = pi M / (pi m)      stationary vector of the restart process

Two composition operators combine PH representations: a sequential one that
routes exit states of the first into entry states of the second through a
stochastic transfer matrix, and a parallel one that starts both jointly from
a coupled initial vector (absorption time = max of the two).  Both report the
correlation coefficient realised by the chosen coupling.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import InvalidModelError, MarginalMismatchError, NotCanonicalError

DEFAULT_TOL = 1e-9

# beyond this total order par_compose is allowed but almost certainly a mistake
PAR_COMPOSE_WARN_ORDER = 10**6


def _as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise InvalidModelError(f"expected a 1-D vector, got shape {v.shape}")
    return v


def _as_matrix(x) -> np.ndarray:
    mat = np.asarray(x, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidModelError(f"expected a square matrix, got shape {mat.shape}")
    return mat


def topological_order(D: np.ndarray) -> np.ndarray | None:
    """Kahn topological sort on the off-diagonal support of ``D``.

    Returns a permutation that makes ``D`` upper triangular, or ``None`` if
    the support graph has a cycle (the representation is not acyclic).
    """
    n = D.shape[0]
    succ = [np.nonzero((D[i] > 0) & (np.arange(n) != i))[0] for i in range(n)]
    indeg = np.zeros(n, dtype=int)
    for i in range(n):
        for j in succ[i]:
            indeg[j] += 1
    queue = sorted(np.nonzero(indeg == 0)[0])
    order = []
    while queue:
        i = queue.pop(0)
        order.append(i)
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                queue.append(j)
        queue.sort()
    if len(order) != n:
        return None
    return np.array(order, dtype=int)


@dataclass(frozen=True)
class PhaseType:
    """Immutable phase-type representation ``(pi, D)``.

    ``pi`` is the initial probability row vector, ``D`` the n-by-n
    sub-generator (negative diagonal, non-negative off-diagonal, row sums
    <= 0, invertible).  Arrays are copied and frozen at construction.
    """

    pi: np.ndarray
    D: np.ndarray

    def __init__(self, pi, D, tol: float = DEFAULT_TOL):
        pi = _as_vector(pi).copy()
        D = _as_matrix(D).copy()
        n = D.shape[0]
        if pi.shape[0] != n:
            raise InvalidModelError(f"pi has length {pi.shape[0]}, D is {n}x{n}")
        if not (np.all(np.isfinite(pi)) and np.all(np.isfinite(D))):
            raise InvalidModelError("non-finite entries")
        if np.any(pi < -tol):
            raise InvalidModelError("pi has negative entries")
        pi[pi < 0] = 0.0
        if abs(pi.sum() - 1.0) > max(tol, n * 1e-15):
            raise InvalidModelError(f"pi sums to {pi.sum()!r}, not 1")
        diag = np.diag(D)
        if np.any(diag >= 0):
            raise InvalidModelError("diagonal of D must be negative")
        off = D - np.diag(diag)
        if np.any(off < -tol * max(1.0, float(np.abs(diag).max()))):
            raise InvalidModelError("off-diagonal of D must be non-negative")
        off[off < 0] = 0.0
        D = off + np.diag(diag)
        d = -D.sum(axis=1)
        scale_ref = max(1.0, float(np.abs(diag).max()))
        if np.any(d < -tol * scale_ref):
            raise InvalidModelError("row sums of D must be <= 0")
        # invertibility == all eigenvalues in the open left half plane for
        # this sign pattern (Gershgorin); a rank check is enough
        try:
            np.linalg.solve(D, np.ones(n))
        except np.linalg.LinAlgError:
            raise InvalidModelError("not a valid sub-generator") from None
        if np.linalg.matrix_rank(D) < n:
            raise InvalidModelError("not a valid sub-generator")
        pi.setflags(write=False)
        D.setflags(write=False)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "D", D)

    @property
    def order(self) -> int:
        return self.D.shape[0]

    @property
    def d(self) -> np.ndarray:
        """Exit rate vector -D 1 (clipped at 0)."""
        return np.maximum(-self.D.sum(axis=1), 0.0)

    @cached_property
    def desc(self) -> "Descriptors":
        return descriptors(self)

    @property
    def mean(self) -> float:
        return float(self.pi @ self.desc.m)

    def moment(self, k: int) -> float:
        """Raw moment E(X^k) = k! pi M^k 1."""
        left = self.pi
        for _ in range(k):
            left = left @ self.desc.M
        return math.factorial(k) * float(left.sum())

    def is_acyclic(self) -> bool:
        return topological_order(self.D) is not None

    def __eq__(self, other):
        return (
            isinstance(other, PhaseType)
            and self.pi.shape == other.pi.shape
            and np.array_equal(self.pi, other.pi)
            and np.array_equal(self.D, other.D)
        )

    def __hash__(self):
        return hash((self.pi.tobytes(), self.D.tobytes()))

    def __repr__(self):
        return f"PhaseType(order={self.order}, mean={self.mean:.6g})"


def unit_exponential(rate: float = 1.0) -> PhaseType:
    return PhaseType([1.0], [[-float(rate)]])


@dataclass(frozen=True)
class Descriptors:
    """Derived vectors of a PhaseType; ``a`` is NaN where ``psi`` is zero."""

    M: np.ndarray
    m: np.ndarray
    d: np.ndarray
    B: np.ndarray
    psi: np.ndarray
    a: np.ndarray
    phi: np.ndarray

    @property
    def mean(self) -> float:
        # psi . a over defined entries equals pi . m (law of total expectation)
        return float(np.where(self.psi > 0, self.psi * np.nan_to_num(self.a), 0.0).sum())


def _mean_matrix(D: np.ndarray) -> np.ndarray:
    """M = -D^{-1}, by back-substitution when D is permutable to triangular."""
    n = D.shape[0]
    order = topological_order(D)
    if order is not None:
        P = np.eye(n)[order]
        # P D P^T is upper triangular in the new ordering
        upper = P @ D @ P.T
        X = scipy.linalg.solve_triangular(upper, -np.eye(n), lower=False)
        M = P.T @ X @ P
    else:
        try:
            M = np.linalg.solve(D, -np.eye(n))
        except np.linalg.LinAlgError:
            raise InvalidModelError("not a valid sub-generator") from None
    if np.any(M < -1e-9 * max(1.0, float(np.abs(M).max()))):
        raise InvalidModelError("mean matrix -D^{-1} has negative entries")
    return np.maximum(M, 0.0)


def descriptors(phd: PhaseType, psi_zero_tol: float = 1e-14) -> Descriptors:
    """Compute all descriptor vectors of ``phd`` in one pass."""
    M = _mean_matrix(phd.D)
    m = M.sum(axis=1)
    d = phd.d
    B = M * d[np.newaxis, :]
    psi = phd.pi @ B
    psi = np.maximum(psi, 0.0)
    psi[psi < psi_zero_tol] = 0.0
    piM = phd.pi @ M
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(psi > 0, (piM @ B) / psi, np.nan)
    mean = float(phd.pi @ m)
    phi = piM / mean
    return Descriptors(M=M, m=m, d=d, B=B, psi=psi, a=a, phi=phi)


# ---------------------------------------------------------------------------
# canonical forms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CanonicalForm:
    """Recognition result: tag 'first', 'second' or 'none'."""

    tag: str
    rates: np.ndarray | None = None
    couplings: np.ndarray | None = None  # sub-diagonal rates of the second form

    def __bool__(self):
        return self.tag != "none"


def recognize_canonical(phd: PhaseType, tol: float = DEFAULT_TOL) -> CanonicalForm:
    """Classify a representation as first/second canonical bidiagonal form.

    First form: general initial vector, full coupling D(i,i+1) = mu_i and
    non-decreasing rates (single exit from the last state).  Second form:
    pi = e_1, non-increasing rates, couplings 0 <= mu_{i,i+1} <= mu_i.
    """
    n = phd.order
    D = phd.D
    rates = -np.diag(D)
    scale = max(1.0, float(rates.max()))
    off = D - np.diag(np.diag(D))
    mask = np.ones_like(D, dtype=bool)
    np.fill_diagonal(mask, False)
    if n > 1:
        sup = np.arange(n - 1)
        mask[sup, sup + 1] = False
    if np.any(np.abs(off[mask]) > tol * scale):
        return CanonicalForm("none")
    sup_rates = D[np.arange(n - 1), np.arange(n - 1) + 1] if n > 1 else np.empty(0)

    nondecreasing = np.all(np.diff(rates) >= -tol * scale)
    full_coupling = np.all(np.abs(sup_rates - rates[:-1]) <= tol * scale)
    if nondecreasing and full_coupling:
        return CanonicalForm("first", rates=rates, couplings=sup_rates)

    nonincreasing = np.all(np.diff(rates) <= tol * scale)
    entry_is_first = abs(phd.pi[0] - 1.0) <= tol and np.all(phd.pi[1:] <= tol)
    bounded = np.all(sup_rates <= rates[:-1] + tol * scale) and np.all(sup_rates >= -tol * scale)
    if nonincreasing and entry_is_first and bounded:
        return CanonicalForm("second", rates=rates, couplings=sup_rates)
    return CanonicalForm("none")


def laplace(phd: PhaseType, s: float, tol: float = DEFAULT_TOL) -> float:
    """Laplace transform at ``s >= 0`` via the canonical product formulas."""
    if s < 0:
        raise InvalidModelError("s must be non-negative")
    form = recognize_canonical(phd, tol)
    if not form:
        raise NotCanonicalError(
            "representation is not in canonical form; use laplace_generic() "
            "for the resolvent evaluation pi (sI - D)^{-1} d"
        )
    mu = form.rates
    n = phd.order
    factors = mu / (mu + s)
    if form.tag == "first":
        # suffix products prod_{j>=i} mu_j/(mu_j+s)
        suffix = np.cumprod(factors[::-1])[::-1]
        return float(np.dot(phd.pi, suffix))
    # second form: branch probabilities along the single entry path
    cpl = np.append(form.couplings, 0.0)
    stay = cpl / mu  # probability of moving to the next phase
    exit_prob = 1.0 - stay
    prefix_stay = np.concatenate(([1.0], np.cumprod(stay[:-1])))
    prefix_factor = np.cumprod(factors)
    return float(np.sum(exit_prob * prefix_stay * prefix_factor))


def laplace_generic(phd: PhaseType, s: float) -> float:
    """Resolvent evaluation pi (sI - D)^{-1} d for any representation."""
    n = phd.order
    return float(phd.pi @ np.linalg.solve(s * np.eye(n) - phd.D, phd.d))


# ---------------------------------------------------------------------------
# exponentiality check and scaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentialityReport:
    passed: bool
    max_rel_deviation: float
    worst_check: str

    def __bool__(self):
        return self.passed


def is_exponential(
    phd: PhaseType, rate: float = 1.0, tol: float = DEFAULT_TOL
) -> ExponentialityReport:
    """Check whether ``phd`` represents Exp(rate).

    The survival function pi e^{Dt} 1 is compared against e^{-rate*t} on a
    geometric 20-point grid over [0.01/rate, 20/rate], and the first 2n raw
    moments are compared against those of the exponential.  Moments are
    compared through the scale-free ratios pi (rate*M)^k 1, which avoids
    factorial overflow for large orders.
    """
    if rate <= 0:
        raise InvalidModelError("rate must be positive")
    n = phd.order
    worst = 0.0
    worst_at = ""
    grid = np.geomspace(0.01 / rate, 20.0 / rate, 20)
    ones = np.ones(n)
    for t in grid:
        surv = float(phd.pi @ scipy.linalg.expm(phd.D * t) @ ones)
        ref = math.exp(-rate * t)
        dev = abs(surv - ref) / ref
        if dev > worst:
            worst, worst_at = dev, f"survival at t={t:.6g}"
    scaled_M = rate * phd.desc.M
    left = phd.pi
    for k in range(1, 2 * n + 1):
        left = left @ scaled_M
        dev = abs(float(left.sum()) - 1.0)
        if dev > worst:
            worst, worst_at = dev, f"moment k={k}"
    return ExponentialityReport(worst <= tol, worst, worst_at)


def scale(phd: PhaseType, rate: float) -> PhaseType:
    """Speed time up by ``rate``: (pi, rate*D); the mean divides by ``rate``."""
    if rate <= 0:
        raise InvalidModelError("scaling rate must be positive")
    return PhaseType(phd.pi, rate * phd.D)


# ---------------------------------------------------------------------------
# compositions
# ---------------------------------------------------------------------------


def _moments_sigma(phd: PhaseType) -> tuple[float, float]:
    e1 = phd.mean
    e2 = phd.moment(2)
    var = max(e2 - e1 * e1, 0.0)
    return e1, math.sqrt(var)


def seq_compose(
    x: PhaseType, y: PhaseType, transfer: np.ndarray, tol: float = DEFAULT_TOL
) -> tuple[PhaseType, float]:
    """Concatenate ``x`` and ``y`` routing exits of x through ``transfer``.

    ``transfer`` must be row-stochastic with psi_x @ transfer = pi_y.  Returns
    the order n_x+n_y representation (mean = E(X)+E(Y)) and the correlation
    coefficient realised between the two durations.
    """
    transfer = np.asarray(transfer, dtype=float)
    nx, ny = x.order, y.order
    if transfer.shape != (nx, ny):
        raise MarginalMismatchError(f"transfer matrix must be {nx}x{ny}")
    if np.any(transfer < -tol):
        raise MarginalMismatchError("transfer matrix has negative entries")
    if np.any(np.abs(transfer.sum(axis=1) - 1.0) > max(tol, 100 * ny * 1e-16)):
        raise MarginalMismatchError("transfer matrix rows must sum to 1")
    dx = x.desc
    dy = y.desc
    if np.any(np.abs(dx.psi @ transfer - y.pi) > max(tol, 100 * ny * 1e-16)):
        raise MarginalMismatchError("psi_X @ transfer must equal pi_Y")

    D = np.zeros((nx + ny, nx + ny))
    D[:nx, :nx] = x.D
    D[:nx, nx:] = dx.d[:, np.newaxis] * transfer
    D[nx:, nx:] = y.D
    pi = np.concatenate([x.pi, np.zeros(ny)])
    composed = PhaseType(pi, D)

    ex, sx = _moments_sigma(x)
    ey, sy = _moments_sigma(y)
    routed = transfer @ dy.m
    exy = float(np.sum(np.where(dx.psi > 0, dx.psi * np.nan_to_num(dx.a) * routed, 0.0)))
    rho = (exy - ex * ey) / (sx * sy)
    return composed, rho


def par_compose(
    x: PhaseType, y: PhaseType, pi_joint: np.ndarray, tol: float = DEFAULT_TOL
) -> tuple[PhaseType, float]:
    """Start ``x`` and ``y`` jointly from the coupled initial matrix.

    ``pi_joint`` is n_x-by-n_y with row sums pi_x and column sums pi_y.  The
    absorption time of the result is max(X, Y); the reported correlation is
    the one realised between X and Y themselves.
    """
    pi_joint = np.asarray(pi_joint, dtype=float)
    nx, ny = x.order, y.order
    if pi_joint.shape != (nx, ny):
        raise MarginalMismatchError(f"joint initial vector must be {nx}x{ny}")
    if np.any(pi_joint < -tol):
        raise MarginalMismatchError("joint initial vector has negative entries")
    if np.any(np.abs(pi_joint.sum(axis=1) - x.pi) > max(tol, 100 * nx * ny * 1e-16)):
        raise MarginalMismatchError("row sums must equal pi_X")
    if np.any(np.abs(pi_joint.sum(axis=0) - y.pi) > max(tol, 100 * nx * ny * 1e-16)):
        raise MarginalMismatchError("column sums must equal pi_Y")

    total = nx * ny + ny + nx
    if total > PAR_COMPOSE_WARN_ORDER:
        warnings.warn(
            f"parallel composition creates {total} states", RuntimeWarning, stacklevel=2
        )
    dxv = x.d
    dyv = y.d
    D = np.zeros((total, total))
    D[: nx * ny, : nx * ny] = np.kron(x.D, np.eye(ny)) + np.kron(np.eye(nx), y.D)
    D[: nx * ny, nx * ny : nx * ny + ny] = np.kron(dxv[:, np.newaxis], np.eye(ny))
    D[: nx * ny, nx * ny + ny :] = np.kron(np.eye(nx), dyv[:, np.newaxis])
    D[nx * ny : nx * ny + ny, nx * ny : nx * ny + ny] = y.D
    D[nx * ny + ny :, nx * ny + ny :] = x.D
    pi = np.concatenate([pi_joint.reshape(-1), np.zeros(nx + ny)])
    composed = PhaseType(pi, D)

    ex, sx = _moments_sigma(x)
    ey, sy = _moments_sigma(y)
    exy = float(np.sum(pi_joint * np.outer(x.desc.m, y.desc.m)))
    rho = (exy - ex * ey) / (sx * sy)
    return composed, rho
