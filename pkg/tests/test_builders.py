import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

import phasecorr as pc
from phasecorr.builders import (
    append_descriptor_update,
    chain_rho_from_inverse_rates,
    negative3_rho,
    prepend_descriptor_update,
)


# -- closed-form first canonical -------------------------------------------------


def test_first_canonical_from_rates():
    assert_allclose(pc.first_canonical_from_rates([1.0, 2.0]).pi, [0.5, 0.5])
    assert_allclose(pc.first_canonical_from_rates([1.0, 2.0, 3.0]).pi, [1 / 3] * 3)
    assert_allclose(pc.first_canonical_from_rates([1.0]).pi, [1.0])
    with pytest.raises(pc.InvalidModelError):
        pc.first_canonical_from_rates([1.0, 0.9])
    with pytest.raises(pc.InvalidModelError):
        pc.first_canonical_from_rates([2.0, 3.0])


@pytest.mark.parametrize("rates", [[1.0], [1.0, 2.0], [1.0, 1.5, 4.0], [1.0, 3.0, 3.0, 7.0]])
def test_first_canonical_is_exponential(rates):
    phd = pc.first_canonical_from_rates(rates)
    assert pc.is_exponential(phd, 1.0).passed


def test_phi_equals_pi_for_first_canonical_exponentials():
    for rates in ([1.0, 2.0], [1.0, 2.0, 8.0 / 3.0], [1.0, 1.2, 5.0, 9.0]):
        phd = pc.first_canonical_from_rates(rates)
        assert_allclose(phd.desc.phi, phd.pi, atol=1e-12)


# -- append / prepend -------------------------------------------------------------


def test_append_phase_examples():
    e = pc.unit_exponential()
    grown = pc.append_phase(e, 0.5, 0.0)
    assert_allclose(grown.pi, [0.5, 0.5])
    assert_allclose(grown.D, [[-1.0, 1.0], [0.0, -2.0]])

    degenerate = pc.append_phase(e, 0.5, 1.0)
    assert_allclose(np.diag(degenerate.D), [-1.0, -1.0])
    assert_allclose(degenerate.D[0, 1], 0.0)
    assert pc.is_exponential(degenerate, 1.0).passed

    h2, _, _ = pc.harmonic_chain(2)
    h3 = pc.append_phase(h2, 1.0 / 3.0, 0.0)
    assert_allclose(h3.pi, [1 / 3] * 3, atol=1e-15)
    assert_allclose(np.diag(h3.D), [-1.0, -2.0, -3.0])

    with pytest.raises(pc.InvalidModelError):
        pc.append_phase(e, 0.0, 0.0)
    with pytest.raises(pc.InvalidModelError):
        pc.append_phase(e, 0.5, 1.5)


@pytest.mark.parametrize("p,q", [(0.5, 0.0), (0.3, 0.4), (0.8, 1.0), (0.12, 0.97)])
def test_append_phase_descriptor_closed_forms(p, q):
    base, _, _ = pc.optimal_positive_chain(3)
    d0 = base.desc
    grown = pc.append_phase(base, p, q)
    assert pc.is_exponential(grown, 1.0).passed
    m_exp, psi_exp, a_exp = append_descriptor_update(d0.m, d0.psi, d0.a, p, q)
    d1 = grown.desc
    assert_allclose(d1.m, m_exp, atol=1e-10)
    assert_allclose(d1.psi, psi_exp, atol=1e-10)
    defined = d1.psi > 0
    assert_allclose(d1.a[defined], a_exp[defined], atol=1e-10)
    assert_allclose(psi_exp.sum(), 1.0, atol=1e-12)


@pytest.mark.parametrize("p,mu", [(0.0, 2.0), (0.2, 3.0), (1.0, 2.0), (0.7, 1.0)])
def test_prepend_phase_descriptor_closed_forms(p, mu):
    base, _, _ = pc.optimal_positive_chain(2)
    d0 = base.desc
    grown = pc.prepend_phase(base, p, mu)
    assert pc.is_exponential(grown, 1.0).passed
    m_exp, psi_exp, a_exp = prepend_descriptor_update(
        d0.m, d0.psi, np.nan_to_num(d0.a), p, mu
    )
    d1 = grown.desc
    assert_allclose(d1.m, m_exp, atol=1e-10)
    assert_allclose(d1.psi, psi_exp, atol=1e-10)
    defined = d1.psi > 0
    assert_allclose(d1.a[defined], a_exp[defined], atol=1e-10)


def test_prepend_phase_examples():
    e = pc.unit_exponential()
    two = pc.prepend_phase(e, 0.0, 2.0)
    # the matrix is the reversed optimal 2-chain's (second canonical)
    assert_allclose(two.D, [[-2.0, 1.0], [0.0, -1.0]])
    assert_allclose(two.pi, [0.0, 1.0])

    # p = 1 gives the genuine second canonical single-entry form
    rev = pc.prepend_phase(e, 1.0, 2.0)
    assert pc.recognize_canonical(rev).tag == "second"
    assert rev == pc.reverse_transform(pc.optimal_positive_chain(2)[0])

    mix = pc.prepend_phase(e, 0.37, 1.0)
    assert_allclose(mix.pi, [0.37, 0.63])
    assert_allclose(mix.D, [[-1.0, 0.0], [0.0, -1.0]])

    spec = pc.prepend_phase(e, 0.2, 3.0)
    assert_allclose(spec.desc.m, [1.0, 1.0], atol=1e-12)
    assert_allclose(spec.desc.a, [1.0 / 3.0, 1.0 + 0.2 * 2.0 / (3.0 * 2.8)], atol=1e-12)

    with pytest.raises(pc.InvalidModelError):
        pc.prepend_phase(e, 0.2, 0.9)


# -- optimal chain ----------------------------------------------------------------


def test_rho_plus_recurrence_values():
    seq = pc.rho_plus_sequence(3)
    assert_allclose(seq, [0.0, 0.25, 0.390625], atol=1e-15)


@pytest.mark.parametrize("n,rates", [(1, [1.0]), (2, [1.0, 2.0]), (3, [1.0, 2.0, 8.0 / 3.0])])
def test_optimal_chain_structure(n, rates):
    phd, rho, spec = pc.optimal_positive_chain(n)
    assert_allclose(-np.diag(phd.D), rates, rtol=1e-14)
    assert pc.recognize_canonical(phd).tag == "first"
    m = phd.desc.m
    assert_allclose(float(phd.pi @ (m * m)) - 1.0, rho, atol=1e-12)
    assert spec.n == n


def test_optimal_chain_rates_follow_recurrence():
    n = 12
    phd, _, spec = pc.optimal_positive_chain(n)
    seq = pc.rho_plus_sequence(n)
    expected = [1.0] + [2.0 / (1.0 - seq[k - 1]) for k in range(1, n)]
    assert_allclose(-np.diag(phd.D), expected, rtol=1e-13)
    assert_allclose(spec.p, [(1.0 - seq[k - 1]) / 2.0 for k in range(1, n)], rtol=1e-13)
    assert pc.is_exponential(phd, 1.0).passed


# -- harmonic chain ----------------------------------------------------------------


def test_harmonic_chain_values():
    _, rp2, rm2 = pc.harmonic_chain(2)
    assert_allclose(rp2, 0.25, atol=1e-15)
    assert_allclose(rm2, -0.25, atol=1e-15)
    _, rp3, rm3 = pc.harmonic_chain(3)
    assert_allclose(rp3, 7.0 / 18.0, atol=1e-15)
    assert_allclose(rm3, -13.0 / 36.0, atol=1e-15)
    _, rp1, rm1 = pc.harmonic_chain(1)
    assert rp1 == rm1 == 0.0
    phd, _, _ = pc.harmonic_chain(5)
    assert_allclose(phd.pi, np.full(5, 0.2))
    assert pc.is_exponential(phd, 1.0).passed


def test_bounds_monotone_and_dominating():
    seq = pc.rho_plus_sequence(500)
    assert np.all(np.diff(seq) > 0)
    assert seq[-1] < 1.0
    minus = np.array([pc.harmonic_rho_minus(n) for n in range(1, 501)])
    assert np.all(np.diff(minus) < 0)
    assert np.all(minus > 1.0 - math.pi**2 / 6.0)
    harmonic_plus = np.array([pc.harmonic_rho_plus(n) for n in range(1, 501)])
    assert np.all(seq >= harmonic_plus - 1e-15)
    assert np.all(seq[2:] > harmonic_plus[2:])
    assert_allclose(seq[:2], harmonic_plus[:2], atol=1e-15)


# -- phase counts -------------------------------------------------------------------


def test_min_phases_exact_thresholds():
    # exact smallest-n values under the recurrence / partial sums; the
    # 0.95-optimal and 0.99-harmonic entries are one off from the informal
    # published table (margins +9.1e-5 and -2.8e-6, see notes)
    assert pc.min_phases_for_rho(0.8) == 16
    assert pc.min_phases_for_rho(0.9) == 35
    assert pc.min_phases_for_rho(0.95) == 74
    assert pc.min_phases_for_rho(0.99) == 393
    assert pc.min_phases_for_rho(0.8, chain="harmonic") == 18
    assert pc.min_phases_for_rho(0.9, chain="harmonic") == 44
    assert pc.min_phases_for_rho(0.95, chain="harmonic") == 105
    assert pc.min_phases_for_rho(0.99, chain="harmonic") == 716
    assert pc.min_phases_for_rho(-0.25) == 2
    assert pc.min_phases_for_rho(0.0) == 1


def test_min_phases_rejects_unreachable():
    with pytest.raises(pc.InfeasibleTargetError):
        pc.min_phases_for_rho(1.0)
    with pytest.raises(pc.InfeasibleTargetError):
        pc.min_phases_for_rho(1.0 - math.pi**2 / 6.0)
    with pytest.raises(pc.InfeasibleTargetError):
        pc.min_phases_for_rho(-0.7)


# -- reversal ------------------------------------------------------------------------


def test_reverse_transform_worked_examples():
    two, _, _ = pc.optimal_positive_chain(2)
    rev = pc.reverse_transform(two)
    assert_allclose(rev.pi, [1.0, 0.0])
    assert_allclose(rev.D, [[-2.0, 1.0], [0.0, -1.0]])

    e = pc.unit_exponential()
    assert pc.reverse_transform(e) == e

    h3, _, _ = pc.harmonic_chain(3)
    rev3 = pc.reverse_transform(h3)
    assert_allclose(np.diag(rev3.D), [-3.0, -2.0, -1.0])
    assert_allclose([rev3.D[0, 1], rev3.D[1, 2]], [2.0, 1.0])


@pytest.mark.parametrize("n", [2, 3, 6, 10])
def test_reverse_transform_descriptor_exchange(n):
    chain, _, _ = pc.optimal_positive_chain(n)
    d = chain.desc
    rev = pc.reverse_transform(chain)
    dr = rev.desc
    flip = np.arange(n)[::-1]
    assert_allclose(dr.psi, chain.pi[flip], atol=1e-10)
    assert_allclose(dr.a, d.m[flip], atol=1e-10)
    # m' = a where the original defines a (single exit state)
    assert_allclose(dr.m[-1], d.a[-1], atol=1e-10)
    # second canonical with couplings mu_i - 1
    form = pc.recognize_canonical(rev)
    assert form.tag == "second"
    assert_allclose(form.couplings, form.rates[:-1] - 1.0, atol=1e-10)
    # moments preserved
    for k in range(1, 2 * n + 1):
        assert_allclose(rev.moment(k), chain.moment(k), rtol=1e-9)


def test_reverse_transform_involution():
    for n in (2, 4, 7):
        chain, _, _ = pc.optimal_positive_chain(n)
        back = pc.reverse_transform(pc.reverse_transform(chain))
        assert_allclose(back.pi, chain.pi, atol=1e-10)
        assert_allclose(back.D, chain.D, atol=1e-10)


def test_reverse_transform_rejects_dead_states():
    dead = pc.PhaseType([0.0, 1.0], [[-2.0, 0.0], [0.0, -1.0]])
    with pytest.raises(pc.InvalidModelError, match="phi"):
        pc.reverse_transform(dead)


# -- gradient -----------------------------------------------------------------------


@pytest.mark.parametrize("n", [2, 5])
def test_gradient_vanishes_on_optimal_chain(n):
    chain, _, _ = pc.optimal_positive_chain(n)
    grad = pc.rho_gradient(chain)
    assert np.all(np.abs(grad[1:]) < 1e-8)


def test_gradient_matches_finite_differences():
    chain, _, _ = pc.optimal_positive_chain(3)
    x = 1.0 / -np.diag(chain.D)
    x[1] = 1.0 / 2.1  # perturb away from the optimum
    phd = pc.first_canonical_from_rates(1.0 / x)
    grad = pc.rho_gradient(phd)
    h = 1e-6
    for i in (1, 2):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fd = (chain_rho_from_inverse_rates(xp) - chain_rho_from_inverse_rates(xm)) / (2 * h)
        assert grad[i] != 0.0
        assert_allclose(grad[i], fd, rtol=1e-5)
        assert np.sign(grad[i]) == np.sign(fd)


# -- negative correlation -------------------------------------------------------------


def test_negative_step_search_from_unit_exponential():
    p, q, rho = pc.negative_step_search(pc.unit_exponential(), grid=11)
    assert_allclose(p, 0.5, atol=1e-6)
    assert q <= 1e-6
    assert_allclose(rho, -0.25, atol=1e-9)


def test_negative_step_search_from_harmonic2():
    h2, _, _ = pc.harmonic_chain(2)
    p, q, rho = pc.negative_step_search(h2, grid=11)
    assert_allclose(p, 1.0 / 3.0, atol=1e-6)
    assert q <= 1e-6
    assert_allclose(rho, -13.0 / 36.0, atol=1e-9)


def test_negative_step_objective_prefers_q_zero():
    h2, _, _ = pc.harmonic_chain(2)
    at_zero = pc.negative_step_objective(h2, 1.0 / 3.0, 0.0)
    at_half = pc.negative_step_objective(h2, 1.0 / 3.0, 0.5)
    assert at_half > at_zero


def test_negative3_special():
    res = pc.negative3_special()
    assert abs(res.rho - (-0.36154)) < 5e-5
    assert abs(res.mu3 - 3.09529) < 1e-3
    assert abs(res.mu2 - 1.91300) < 1e-3
    assert res.constraint_residual < 1e-10
    assert res.rho < pc.harmonic_rho_minus(3)
    assert pc.is_exponential(res.phd, 1.0).passed
    # the harmonic point mu3 = 3 evaluates to the harmonic bound
    assert_allclose(negative3_rho(3.0), -13.0 / 36.0, atol=1e-12)
