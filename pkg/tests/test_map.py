import numpy as np
import pytest
from numpy.testing import assert_allclose

import phasecorr as pc
from phasecorr.mapproc import ReducibleChainWarning, correlation_bounds, embedded_stationary


def expansion_of(n):
    chain, _, _ = pc.optimal_positive_chain(n)
    return chain, pc.path_expand(chain)


# -- path expansion -----------------------------------------------------------


def test_path_expand_order1():
    e = pc.unit_exponential()
    ex = pc.path_expand(e)
    assert ex.phd == e
    assert_allclose(ex.upsilon, [1.0])


def test_path_expand_order2_worked_example():
    chain, ex = expansion_of(2)
    assert ex.phd.order == 3
    assert_allclose(ex.phd.pi, [0.5, 0.5, 0.0])
    assert_allclose(ex.phd.desc.m, [0.5, 1.5, 0.5])
    assert_allclose(ex.entry_states, [0, 1])
    assert_allclose(ex.exit_states, [0, 2])
    assert pc.is_exponential(ex.phd, 1.0).passed


def test_path_expand_order3_entry_means():
    chain, ex = expansion_of(3)
    assert ex.phd.order == 6
    m_chain = chain.desc.m
    m_exp = ex.phd.desc.m
    # entry means are the chain's conditional means, shortest path first
    assert_allclose(m_exp[ex.entry_states], m_chain[::-1], atol=1e-12)
    a_exp = ex.phd.desc.a
    assert_allclose(a_exp[ex.exit_states], m_chain[::-1], atol=1e-12)
    assert pc.is_exponential(ex.phd, 1.0).passed


def test_path_expand_second_canonical():
    chain, _ = expansion_of(3)
    rev = pc.reverse_transform(chain)
    ex = pc.path_expand(rev)
    assert ex.phd.order == 6
    assert pc.is_exponential(ex.phd, 1.0).passed
    assert_allclose(ex.upsilon, rev.desc.psi, atol=1e-12)


def test_path_expand_rejects_non_canonical():
    dense = pc.PhaseType([0.5, 0.5], [[-2.0, 1.0], [0.5, -1.0]])
    with pytest.raises(pc.NotCanonicalError):
        pc.path_expand(dense)


# -- build_map ------------------------------------------------------------------


def comonotone_nu(ex):
    desc = ex.phd.desc
    n_paths = len(ex.entry_states)
    nu = np.zeros((ex.phd.order, ex.phd.order))
    for i in range(n_paths):
        nu[ex.exit_states[i], ex.entry_states[i]] = ex.upsilon[i]
    return nu


def test_build_map_comonotone_worked_example():
    _, ex = expansion_of(2)
    nu = comonotone_nu(ex)
    with pytest.warns(ReducibleChainWarning):
        built = pc.build_map(ex, nu)
    expected_d1 = np.zeros((3, 3))
    expected_d1[0, 0] = 2.0
    expected_d1[2, 1] = 2.0
    assert_allclose(built.D1, expected_d1, atol=1e-12)
    assert_allclose(built.pi, ex.phd.pi, atol=1e-12)
    assert_allclose((built.D0 + built.D1).sum(axis=1), 0.0, atol=1e-12)
    assert_allclose(built.pi @ built.P, built.pi, atol=1e-10)
    assert_allclose(pc.autocorrelation(built), 0.25, atol=1e-12)


def test_build_map_poisson_and_independent():
    e = pc.unit_exponential()
    ex = pc.path_expand(e)
    built = pc.build_map(ex, np.array([[1.0]]))
    assert_allclose(built.D0, [[-1.0]])
    assert_allclose(built.D1, [[1.0]])
    assert_allclose(pc.autocorrelation(built), 0.0, atol=1e-12)

    _, ex2 = expansion_of(2)
    desc = ex2.phd.desc
    indep = np.outer(desc.psi, ex2.phd.pi)
    built2 = pc.build_map(ex2, indep)
    assert_allclose(pc.autocorrelation(built2), 0.0, atol=1e-12)


def test_build_map_marginal_stays_exponential():
    _, ex = expansion_of(3)
    lo, hi, nu_lo, nu_hi = pc.autocorr_bounds(ex)
    desc = ex.phd.desc
    flow = pc.target_coupling(nu_hi, hi, desc.psi, ex.phd.pi, 0.2)
    built = pc.build_map(ex, flow.F)
    assert pc.is_exponential(built.marginal(), 1.0).passed
    assert_allclose(built.pi @ built.P, built.pi, atol=1e-10)


def test_build_map_rejects_bad_marginals():
    _, ex = expansion_of(2)
    nu = comonotone_nu(ex)
    nu[0, 0] *= 0.9
    with pytest.raises(pc.MarginalMismatchError):
        pc.build_map(ex, nu)


# -- autocorrelation bounds ------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_autocorr_bounds_match_bivariate(n):
    chain, rho_plus, _ = pc.optimal_positive_chain(n)
    ex = pc.path_expand(chain)
    lo, hi, _, _ = pc.autocorr_bounds(ex)
    m = chain.desc.m
    par_min = pc.monotone_coupling(
        pc.TransportProblem(u=chain.pi, v=chain.pi, alpha=m, beta=m, sense="min")
    ).rho
    assert_allclose(hi, rho_plus, atol=1e-9)
    assert_allclose(lo, par_min, atol=1e-9)


def test_autocorr_bounds_harmonic3():
    chain, _, _ = pc.harmonic_chain(3)
    ex = pc.path_expand(chain)
    lo, hi, _, _ = pc.autocorr_bounds(ex)
    assert_allclose((lo, hi), (-13.0 / 36.0, 7.0 / 18.0), atol=1e-12)


def test_autocorr_affine_in_interpolation_weight():
    _, ex = expansion_of(3)
    lo, hi, nu_lo, nu_hi = pc.autocorr_bounds(ex)
    desc = ex.phd.desc
    indep = np.outer(desc.psi, ex.phd.pi)
    for w in (0.0, 0.25, 0.5, 0.75, 1.0):
        nu = w * nu_hi + (1 - w) * indep
        with pytest.warns(ReducibleChainWarning) if w == 1.0 else np.testing.suppress_warnings():
            built = pc.build_map(ex, nu)
        assert_allclose(pc.autocorrelation(built), w * hi, atol=1e-10)


def test_monotone_and_simplex_bounds_agree():
    for n in (2, 4):
        _, ex = expansion_of(n)
        lo_s, hi_s, _, _ = pc.autocorr_bounds(ex, solver="simplex")
        lo_m, hi_m, _, _ = pc.autocorr_bounds(ex, solver="monotone")
        assert_allclose((lo_s, hi_s), (lo_m, hi_m), atol=1e-10)


# -- order-2 impossibility ---------------------------------------------------------


def test_order2_scan():
    report = pc.order2_impossibility_scan(2000, seed=11)
    assert report.passed
    assert report.max_abs_bound < 1e-9


def test_order2_mu1_family_has_constant_exit_times():
    rep = pc.append_phase(pc.unit_exponential(), 0.4, 0.3)
    d = rep.desc
    defined = d.psi > 0
    assert_allclose(d.a[defined], 1.0, atol=1e-12)
    lo, hi, _, _ = correlation_bounds(rep, solver="monotone")
    assert max(abs(lo), abs(hi)) < 1e-12


def test_order2_mu1_above_one_family_is_input_rigid():
    # single-entry two-phase exponential representations have m = (1, 1)
    for mu in (1.5, 2.0, 4.0):
        rep = pc.prepend_phase(pc.unit_exponential(), 1.0, mu)
        assert pc.recognize_canonical(rep).tag == "second"
        assert_allclose(rep.desc.m, [1.0, 1.0], atol=1e-12)
        lo, hi, _, _ = correlation_bounds(rep, solver="monotone")
        assert max(abs(lo), abs(hi)) < 1e-12


# -- embedded stationary helpers ---------------------------------------------------


def test_embedded_stationary_irreducible():
    P = np.array([[0.2, 0.8], [0.5, 0.5]])
    pi, reduced = embedded_stationary(P)
    assert not reduced
    assert_allclose(pi @ P, pi, atol=1e-12)


def test_embedded_stationary_reducible_weighted():
    # two absorbing classes reached with probabilities 0.3 / 0.7
    P = np.array(
        [
            [0.0, 0.3, 0.7],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]
    )
    pi, reduced = embedded_stationary(P, start=np.array([1.0, 0.0, 0.0]))
    assert reduced
    assert_allclose(pi, [0.0, 0.3, 0.7], atol=1e-12)


# -- simulation ---------------------------------------------------------------------


def test_sampled_intervals_match_formula_lag1():
    _, ex = expansion_of(3)
    lo, hi, nu_lo, nu_hi = pc.autocorr_bounds(ex)
    desc = ex.phd.desc
    flow = pc.target_coupling(nu_hi, hi, desc.psi, ex.phd.pi, 0.25)
    built = pc.build_map(ex, flow.F)
    assert_allclose(pc.autocorrelation(built), 0.25, atol=1e-10)
    times = pc.sample_intervals(built, 200_000, seed=9)
    assert_allclose(times.mean(), 1.0, atol=0.01)
    lag1 = float(np.corrcoef(times[:-1], times[1:])[0, 1])
    # ~3 sigma for the lag-1 estimator at this size
    assert abs(lag1 - 0.25) < 0.012
