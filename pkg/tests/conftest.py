"""Shared oracles and generators for the test suite.

The oracles here are deliberately independent of the library's solution
paths: exhaustive vertex enumeration for transportation polytopes, plain
quadrature for max-distributions, and north-west-corner fills under random
permutations for feasible-coupling sampling.
"""

import itertools

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg


def survival(phd, t):
    return float(phd.pi @ scipy.linalg.expm(phd.D * t) @ np.ones(phd.order))


def mean_of_max_by_quadrature(x, y):
    """E(max(X, Y)) = integral of 1 - F_X(t) F_Y(t), independent marginals
    replaced by the coupled pair is NOT assumed here: this is the oracle for
    the parallel composition of independent copies only when the joint
    initial vector factorises; for coupled starts the oracle integrates the
    coupled survival directly via the composed representation, so this
    helper is used only for the identity E(absorption) = E(max)."""

    def integrand(t):
        fx = 1.0 - survival(x, t)
        fy = 1.0 - survival(y, t)
        return 1.0 - fx * fy

    val, _ = scipy.integrate.quad(integrand, 0.0, np.inf, limit=200)
    return val


def coupled_mean_of_max_by_quadrature(x, y, pi_joint):
    """E(max) for jointly started copies: sum over entry pairs of
    pi_joint(i,j) E(max(X_i, Y_j)) with X_i started in state i."""
    total = 0.0
    nx, ny = x.order, y.order
    for i in range(nx):
        for j in range(ny):
            w = pi_joint[i, j]
            if w == 0:
                continue
            ei = np.zeros(nx)
            ei[i] = 1.0
            ej = np.zeros(ny)
            ej[j] = 1.0

            def integrand(t):
                sx = float(ei @ scipy.linalg.expm(x.D * t) @ np.ones(nx))
                sy = float(ej @ scipy.linalg.expm(y.D * t) @ np.ones(ny))
                return 1.0 - (1.0 - sx) * (1.0 - sy)

            val, _ = scipy.integrate.quad(integrand, 0.0, np.inf, limit=200)
            total += w * val
    return total


def _tree_flows(u, v, basis):
    """Solve the marginal equations on a candidate basis by leaf elimination.

    Returns the flow dict or None if the basis is not a spanning tree.
    """
    m, n = len(u), len(v)
    remaining = set(basis)
    ru = list(u)
    rv = list(v)
    flows = {}
    while remaining:
        progress = False
        for cell in list(remaining):
            i, j = cell
            row_cells = [c for c in remaining if c[0] == i]
            col_cells = [c for c in remaining if c[1] == j]
            if len(row_cells) == 1:
                flows[cell] = ru[i]
                rv[j] -= ru[i]
                ru[i] = 0.0
                remaining.remove(cell)
                progress = True
            elif len(col_cells) == 1:
                flows[cell] = rv[j]
                ru[i] -= rv[j]
                rv[j] = 0.0
                remaining.remove(cell)
                progress = True
        if not progress:
            return None  # contains a cycle
    if max(abs(x) for x in ru + rv) > 1e-9:
        return None
    return flows


def polytope_vertex_objectives(u, v, cost):
    """All vertex objectives of the transportation polytope (tiny instances)."""
    m, n = len(u), len(v)
    cells = [(i, j) for i in range(m) for j in range(n)]
    objectives = []
    for basis in itertools.combinations(cells, m + n - 1):
        flows = _tree_flows(u, v, basis)
        if flows is None:
            continue
        if any(f < -1e-9 for f in flows.values()):
            continue
        obj = sum(max(f, 0.0) * cost[c] for c, f in flows.items())
        objectives.append(obj)
    return objectives


def random_feasible_couplings(u, v, rng, count):
    """Random exactly-feasible couplings as convex combinations of permuted
    north-west-corner fills (each fill has exact marginals by construction)."""
    from phasecorr.coupling import _northwest_corner

    m, n = len(u), len(v)
    vertices = [np.outer(u, v) / u.sum()]
    for _ in range(12):
        pr = rng.permutation(m)
        pc = rng.permutation(n)
        F_sorted, _ = _northwest_corner(u[pr], v[pc])
        F = np.zeros((m, n))
        F[np.ix_(pr, pc)] = F_sorted
        vertices.append(F)
    vertices = np.array(vertices)
    weights = rng.dirichlet(np.ones(len(vertices)), size=count)
    return np.einsum("kv,vmn->kmn", weights, vertices)


def random_subgenerator(rng, n, acyclic=True):
    """Random valid sub-generator (strictly substochastic somewhere)."""
    D = rng.uniform(0.1, 1.0, (n, n))
    if acyclic:
        D = np.triu(D, k=1)
    else:
        np.fill_diagonal(D, 0.0)
    exits = rng.uniform(0.05, 1.0, n)
    np.fill_diagonal(D, -(D.sum(axis=1) + exits))
    return D


def random_phase_type(rng, n, acyclic=True):
    from phasecorr import PhaseType

    pi = rng.dirichlet(np.ones(n))
    return PhaseType(pi, random_subgenerator(rng, n, acyclic))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
