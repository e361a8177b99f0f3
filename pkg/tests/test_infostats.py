import itertools
import math

import numpy as np
import pytest

from smbstat import infostats, oracle
from smbstat.errors import EnumerationCapError, InfiniteInformationError, ValidationError
from smbstat.infostats import (
    MomentReport,
    conditional_moments,
    entropy_additivity_defect,
    entropy_rate_estimate,
    information,
    log_ratio_moment,
    moment_report,
    refinement_depth,
    variance_identity_check,
)
from smbstat.model import BernoulliModel, MarkovModel, TruncationPolicy

LOG2 = math.log(2)


def test_information_values(fair_coin, markov):
    for n in (1, 4, 9):
        assert information(fair_coin, [1] * n) == pytest.approx(n * LOG2, rel=1e-14)
    assert information(markov, [1, 2]) == pytest.approx(-math.log(2 / 30), rel=1e-13)
    assert information(markov, [1, 2]) == pytest.approx(2.70805, abs=5e-6)
    with pytest.raises(InfiniteInformationError):
        information(markov, [1, 3])


def test_moment_report_three_weights(three_weights):
    r = moment_report(three_weights, 1)
    assert r.H_n == pytest.approx(1.039721, abs=5e-7)
    assert r.K(2) == pytest.approx(1.201133, abs=5e-7)
    assert r.sigma2_n == pytest.approx(0.120113, abs=5e-7)
    # hand sums: 0.5 ln^2 2 + 2 * 0.25 * ln^2 4
    assert r.K(2) == pytest.approx(0.5 * LOG2**2 + 0.5 * (2 * LOG2) ** 2, rel=1e-14)
    assert r.reliable and r.retained_mass == pytest.approx(1.0, abs=1e-15)


def test_moment_report_iid_scaling(three_weights):
    assert moment_report(three_weights, 5).sigma2_n == pytest.approx(5 * 0.25 * LOG2**2, rel=1e-13)


def test_fair_coin_has_no_fluctuation(fair_coin):
    for n in (1, 3, 8):
        r = moment_report(fair_coin, n)
        assert r.H_n == pytest.approx(n * LOG2, rel=1e-14)
        assert r.sigma2_n == pytest.approx(0.0, abs=1e-24)


def test_sigma2_equals_k2_minus_h2(markov):
    for n in (1, 4, 9):
        r = moment_report(markov, n)
        assert r.sigma2_n == pytest.approx(r.K(2) - r.H_n**2, rel=1e-10)
        assert min(r.K_w) >= 0 and r.M3 >= 0 and r.M4 >= 0


def test_moment_report_matches_oracle(markov):
    for n in range(1, 13):
        r = moment_report(markov, n)
        assert r.H_n == pytest.approx(oracle.exact_entropy(markov, n), rel=1e-12)
        assert r.sigma2_n == pytest.approx(oracle.exact_variance(markov, n), rel=1e-10)


def test_truncated_report_bounds_and_flags(geometric):
    r = moment_report(geometric, 2, policy=TruncationPolicy(tail_mass=1e-4))
    assert not r.reliable and r.flags
    assert all(t >= 0 for t in r.tail_bound_per_moment)
    exact = moment_report(geometric, 2)
    for w, kw, tb in zip(r.orders, r.K_w, r.tail_bound_per_moment):
        missing = exact.K(w) - kw
        assert 0 <= missing <= tb


def test_moment_report_orders_validation(markov):
    with pytest.raises(ValidationError):
        moment_report(markov, 2, orders=(0.0,))
    with pytest.raises(ValidationError):
        moment_report(markov, 0)


def test_moment_report_roundtrip(markov):
    r = moment_report(markov, 4)
    assert MomentReport.from_dict(r.to_dict()) == r


def test_conditional_moments_independent(three_weights):
    for delta in (0, 3):
        c = conditional_moments(three_weights, 2, 1, delta, orders=(2.0, 3.0))
        np.testing.assert_allclose(c.K_cond, c.K_C, rtol=1e-13)


def test_conditional_moment_markov_example(markov):
    c = conditional_moments(markov, 1, 1, 0, orders=(2.0,))
    P = markov.P
    direct = sum(markov.p[a] * P[a, b] * math.log(P[a, b]) ** 2 for a in range(2) for b in range(2))
    assert c.K_cond[0] == pytest.approx(direct, rel=1e-13)
    assert c.K_cond[0] == pytest.approx(0.546085, abs=5e-7)


def test_variance_identity(fair_coin, three_weights, markov):
    r = variance_identity_check(fair_coin, 3)
    assert r["lhs"] == pytest.approx(0.0, abs=1e-15) and r["rhs"] == 0.0
    r = variance_identity_check(three_weights, 1)
    assert r["lhs"] == pytest.approx(0.120113, abs=5e-7)
    assert r["rhs"] == pytest.approx(r["lhs"], rel=1e-13)
    r = variance_identity_check(markov, 2)
    assert abs(r["lhs"] - r["rhs"]) <= 1e-12


def test_variance_identity_cap(markov):
    with pytest.raises(EnumerationCapError, match="Monte Carlo"):
        variance_identity_check(markov, 13)


def test_entropy_rate_estimate_bernoulli(three_weights):
    e = entropy_rate_estimate(three_weights, [1, 2, 4, 8])
    assert e.h_hat == pytest.approx(1.5 * LOG2, rel=1e-14)
    assert e.gamma_fit is None


def test_entropy_rate_estimate_markov(markov):
    e = entropy_rate_estimate(markov, [2, 4, 6, 8, 10, 12])
    assert e.h_hat == pytest.approx(0.383523, abs=1e-6)
    assert e.gamma_fit == pytest.approx(1.0, abs=1e-3)
    assert e.confident


def test_entropy_rate_estimate_deterministic_cycle():
    cyc = MarkovModel([[0, 1, 0], [0, 0, 1], [1, 0, 0]], p=[1 / 3, 1 / 3, 1 / 3])
    assert entropy_rate_estimate(cyc, [2, 3, 5]).h_hat == pytest.approx(0.0, abs=1e-12)


def test_entropy_rate_estimate_grid_validation(markov):
    with pytest.raises(ValidationError):
        entropy_rate_estimate(markov, [2, 4])
    with pytest.raises(ValidationError):
        entropy_rate_estimate(markov, [2, 2, 4])


def test_log_ratio_moment(three_weights, markov):
    assert log_ratio_moment(three_weights, 2, 2, 1, 2.0) == pytest.approx(0.0, abs=1e-28)
    P, p = markov.P, markov.p
    direct = sum(p[a] * P[a, b] * math.log(P[a, b] / p[b]) ** 2 for a in range(2) for b in range(2))
    assert log_ratio_moment(markov, 1, 1, 0, 2.0) == pytest.approx(direct, rel=1e-13)
    assert direct == pytest.approx(0.451697, abs=5e-7)


def test_log_ratio_moment_decay(markov):
    vals = [log_ratio_moment(markov, 1, 1, d, 2.0) for d in range(9)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    ratios = np.array(vals[1:]) / np.array(vals[:-1])
    # the log-ratio is first order in rho ~ 0.7^delta, so its square decays like 0.49
    assert abs(ratios[-1] - 0.49) < abs(ratios[0] - 0.49)
    assert ratios[-1] == pytest.approx(0.49, abs=0.01)


def test_entropy_additivity(three_weights, markov):
    assert abs(entropy_additivity_defect(three_weights, 2, 2, 0)) < 1e-13
    defects = [abs(entropy_additivity_defect(markov, 1, 1, d)) for d in range(12)]
    ratios = np.array(defects[1:]) / np.array(defects[:-1])
    # second order in the correlation, so the decay rate tends to theta^2
    assert ratios[-1] == pytest.approx(0.49, abs=0.01)


def test_refinement_depth(markov, three_weights):
    k = refinement_depth(markov, 2.0)
    assert (2 / 3) * 0.9 ** (k - 1) <= math.exp(-2) < (2 / 3) * 0.9 ** (k - 2)
    assert refinement_depth(three_weights, 1.0) == 2


def test_lemma_checks_example(three_weights):
    k = refinement_depth(three_weights, 2.0)
    for c in infostats.lemma_checks(three_weights, k, k, 0, 2.0):
        assert c.holds, c


def test_iid_fourth_moment_identity(three_weights):
    s2 = 0.25 * LOG2**2
    m4 = moment_report(three_weights, 1).M4
    for n in range(1, 9):
        M4 = moment_report(three_weights, n).M4
        assert M4 == pytest.approx(n * m4 + 3 * n * (n - 1) * s2**2, rel=1e-10)


def test_variance_rate_estimate(markov):
    est = infostats.variance_rate_estimate(markov, 14)
    assert est["sigma2_hat"] == pytest.approx(oracle.markov_variance(markov.p, markov.P).sigma2, abs=1e-9)


def test_atom_table_matches_brute_force():
    rng = np.random.default_rng(0)
    m = MarkovModel(rng.dirichlet(np.ones(3), size=3))
    t = infostats.atom_table(m, 4)
    brute = []
    for x in itertools.product(range(3), repeat=4):
        mu = m.p[x[0]]
        for a, b in zip(x, x[1:]):
            mu *= m.P[a, b]
        brute.append(mu)
    np.testing.assert_allclose(np.sort(t.measure), np.sort(brute), rtol=1e-13)


def test_csv_rows(markov):
    rows = infostats.moments_csv_rows([moment_report(markov, n) for n in (1, 2)])
    assert len(rows) == 2 and len(rows[0]) == 9
