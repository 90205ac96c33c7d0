"""Extreme-correlation couplings as transportation problems.

The correlation of two PH-represented durations is affine in the coupling
(the joint initial vector of a parallel composition, or the exit-weighted
flow of a sequential one), so its extremes over all couplings with fixed
marginals are solved by a transportation LP with the product cost
c(i,j) = alpha_i * beta_j.  For product costs the optimum is the (anti-)
comonotone north-west-corner coupling; the generic simplex solver is kept as
the oracle and for future non-product costs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleTargetError, InvalidModelError, MarginalMismatchError

_EPS = 1e-12


@dataclass(frozen=True)
class TransportProblem:
    """Marginals (u, alpha) and (v, beta) with cost alpha_i * beta_j.

    ``mean_row``/``mean_col`` default to u.alpha and v.beta (the means of the
    underlying durations); sigmas default to the means, the exponential
    convention.  Override the sigmas when the marginals are not exponential.
    """

    u: np.ndarray
    v: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    sense: str = "max"
    sigma_row: float | None = None
    sigma_col: float | None = None

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        alpha = np.asarray(self.alpha, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        if u.shape != alpha.shape or v.shape != beta.shape:
            raise InvalidModelError("mass and value vectors must have equal length")
        if np.any(u < 0) or np.any(v < 0):
            raise InvalidModelError("masses must be non-negative")
        if abs(u.sum() - v.sum()) > _EPS * max(1.0, u.sum()):
            raise MarginalMismatchError(
                f"row mass {u.sum()!r} and column mass {v.sum()!r} differ"
            )
        if self.sense not in ("min", "max"):
            raise InvalidModelError("sense must be 'min' or 'max'")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def cost(self) -> np.ndarray:
        return np.outer(self.alpha, self.beta)

    @property
    def mean_row(self) -> float:
        return float(self.u @ self.alpha)

    @property
    def mean_col(self) -> float:
        return float(self.v @ self.beta)

    def _sigmas(self) -> tuple[float, float]:
        sr = self.mean_row if self.sigma_row is None else self.sigma_row
        sc = self.mean_col if self.sigma_col is None else self.sigma_col
        return sr, sc

    def rho_of(self, flow: np.ndarray) -> float:
        """Correlation realised by a feasible flow."""
        sr, sc = self._sigmas()
        obj = float(np.sum(flow * self.cost))
        return (obj - self.mean_row * self.mean_col) / (sr * sc)


@dataclass(frozen=True)
class Coupling:
    """A feasible flow with its objective value and realised correlation."""

    F: np.ndarray
    objective: float
    rho: float
    max_reduced_cost_violation: float = 0.0


def _northwest_corner(u: np.ndarray, v: np.ndarray):
    """NW-corner basic feasible flow; returns (F, basis of m+n-1 cells)."""
    m, n = len(u), len(v)
    F = np.zeros((m, n))
    basis = []
    uu = u.copy()
    vv = v.copy()
    i = j = 0
    while True:
        q = min(uu[i], vv[j])
        F[i, j] = q
        basis.append((i, j))
        uu[i] -= q
        vv[j] -= q
        if i == m - 1 and j == n - 1:
            break
        if uu[i] <= vv[j] and i < m - 1:
            i += 1
        elif j < n - 1:
            j += 1
        else:
            i += 1
    return F, basis


def _potentials(basis, C):
    """Solve alpha_i + beta_j = C(i,j) on the basis tree (alpha_0 = 0)."""
    m, n = C.shape
    row_pot = np.full(m, np.nan)
    col_pot = np.full(n, np.nan)
    by_row = [[] for _ in range(m)]
    by_col = [[] for _ in range(n)]
    for (i, j) in basis:
        by_row[i].append(j)
        by_col[j].append(i)
    row_pot[0] = 0.0
    stack = [("r", 0)]
    while stack:
        kind, k = stack.pop()
        if kind == "r":
            for j in by_row[k]:
                if np.isnan(col_pot[j]):
                    col_pot[j] = C[k, j] - row_pot[k]
                    stack.append(("c", j))
        else:
            for i in by_col[k]:
                if np.isnan(row_pot[i]):
                    row_pot[i] = C[i, k] - col_pot[k]
                    stack.append(("r", i))
    return row_pot, col_pot


def _find_cycle(basis, enter):
    """Unique alternating cycle closed by ``enter`` over the basis tree."""
    i0, j0 = enter
    by_row = {}
    by_col = {}
    for (i, j) in basis:
        by_row.setdefault(i, []).append(j)
        by_col.setdefault(j, []).append(i)
    # path from column j0 back to row i0 through basis edges
    parent = {}
    start = ("c", j0)
    goal = ("r", i0)
    seen = {start}
    queue = [start]
    while queue:
        node = queue.pop(0)
        if node == goal:
            break
        kind, k = node
        neighbours = by_col.get(k, []) if kind == "c" else by_row.get(k, [])
        for other in neighbours:
            nxt = ("r", other) if kind == "c" else ("c", other)
            if nxt not in seen:
                seen.add(nxt)
                parent[nxt] = node
                queue.append(nxt)
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    path.reverse()
    # path alternates c, r, c, r, ..., r; edges (r,c) between neighbours
    cells = [enter]
    for a, b in zip(path, path[1:]):
        (ka, va), (kb, vb) = a, b
        cells.append((vb, va) if ka == "c" else (va, vb))
    return cells  # cells[0] gets +theta, alternating afterwards


def _transport_simplex(u, v, C, maximize):
    work = -C if maximize else C
    scale = max(1.0, float(np.abs(work).max()))
    eps = 1e-11 * scale
    F, basis = _northwest_corner(u, v)
    m, n = work.shape
    for _ in range(10000 * (m + n)):
        row_pot, col_pot = _potentials(basis, work)
        rc = work - row_pot[:, None] - col_pot[None, :]
        for (i, j) in basis:
            rc[i, j] = 0.0
        flat = np.argwhere(rc < -eps)
        if flat.size == 0:
            break
        enter = tuple(flat[0])  # Bland: first violating cell, row-major
        cycle = _find_cycle(basis, enter)
        minus = cycle[1::2]
        theta = min(F[c] for c in minus)
        leave = next(c for c in minus if F[c] == theta)
        for k, c in enumerate(cycle):
            F[c] += theta if k % 2 == 0 else -theta
        F[leave] = 0.0
        basis.remove(leave)
        basis.append(enter)
    else:
        raise RuntimeError("transportation simplex failed to converge")
    # optimality certificate: max reduced-cost violation after termination
    row_pot, col_pot = _potentials(basis, work)
    rc = work - row_pot[:, None] - col_pot[None, :]
    for (i, j) in basis:
        rc[i, j] = 0.0
    violation = max(0.0, float(-rc.min()))
    return F, violation


def solve_transport(problem: TransportProblem) -> Coupling:
    """Optimal basic feasible flow via the transportation simplex.

    Rows/columns of zero mass are dropped before solving and reinserted as
    zero slices; optimality is certified by the absence of improving
    reduced-cost cycles.
    """
    u, v = problem.u, problem.v
    rows = np.nonzero(u > 0)[0]
    cols = np.nonzero(v > 0)[0]
    if rows.size == 0:
        F = np.zeros((len(u), len(v)))
        return Coupling(F, 0.0, 0.0)
    C = problem.cost[np.ix_(rows, cols)]
    Fsub, violation = _transport_simplex(u[rows], v[cols], C, problem.sense == "max")
    F = np.zeros((len(u), len(v)))
    F[np.ix_(rows, cols)] = Fsub
    obj = float(np.sum(F * problem.cost))
    return Coupling(F, obj, problem.rho_of(F), violation)


def monotone_coupling(problem: TransportProblem) -> Coupling:
    """Closed-form extreme coupling for the product cost alpha_i * beta_j.

    Sort rows by alpha and columns by beta (one side descending for the
    antitone/min case), run the north-west-corner rule, undo the sorting.
    Ties are broken by original index so the output is deterministic.
    """
    u, v = problem.u, problem.v
    row_order = np.array(sorted(range(len(u)), key=lambda i: (problem.alpha[i], i)))
    if problem.sense == "max":
        col_order = np.array(sorted(range(len(v)), key=lambda j: (problem.beta[j], j)))
    else:
        col_order = np.array(sorted(range(len(v)), key=lambda j: (-problem.beta[j], j)))
    F_sorted, _ = _northwest_corner(u[row_order], v[col_order])
    F = np.zeros_like(F_sorted)
    F[np.ix_(row_order, col_order)] = F_sorted
    obj = float(np.sum(F * problem.cost))
    return Coupling(F, obj, problem.rho_of(F))


def target_coupling(
    f_extreme: np.ndarray,
    rho_extreme: float,
    u: np.ndarray,
    v: np.ndarray,
    rho_target: float,
    problem: TransportProblem | None = None,
) -> Coupling:
    """Convex combination of an extreme coupling with the independent one.

    The correlation is affine in the flow and vanishes at u (x) v, so the
    weight rho_target/rho_extreme realises rho_target exactly.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if rho_extreme == 0.0:
        if rho_target != 0.0:
            raise InfeasibleTargetError("extreme correlation is 0; only 0 reachable")
        weight = 0.0
    else:
        weight = rho_target / rho_extreme
    if weight < -1e-12 or weight > 1 + 1e-12:
        raise InfeasibleTargetError(
            f"target {rho_target} lies beyond the extreme {rho_extreme}"
        )
    weight = min(max(weight, 0.0), 1.0)
    F = weight * np.asarray(f_extreme, dtype=float) + (1.0 - weight) * np.outer(u, v)
    if problem is not None:
        obj = float(np.sum(F * problem.cost))
        return Coupling(F, obj, problem.rho_of(F))
    return Coupling(F, float("nan"), rho_target)


def to_transfer_matrix(F: np.ndarray, psi_x: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Row-normalise a flow into a transfer matrix Psi with psi_X Psi = pi_Y.

    Rows of zero exit probability get pi_Y (they are never reached); any flow
    mass on such a row is rejected.
    """
    F = np.asarray(F, dtype=float)
    psi_x = np.asarray(psi_x, dtype=float)
    row_sums = F.sum(axis=1)
    if np.any(np.abs(row_sums - psi_x) > max(tol, 1e-12) * max(1.0, psi_x.max())):
        bad = np.nonzero((psi_x <= 0) & (row_sums > tol))[0]
        if bad.size:
            raise MarginalMismatchError(
                f"flow assigns mass to zero-exit rows {bad.tolist()}"
            )
        raise MarginalMismatchError("row sums of the flow must equal psi_X")
    pi_y = F.sum(axis=0)
    total = pi_y.sum()
    if total <= 0:
        raise MarginalMismatchError("flow is empty")
    pi_y = pi_y / total
    psi = np.empty_like(F)
    for i in range(F.shape[0]):
        psi[i] = F[i] / psi_x[i] if psi_x[i] > 0 else pi_y
    return psi
