import itertools
import math

import numpy as np
import pytest

from smbstat.errors import EnumerationCapError, ValidationError
from smbstat.infostats import pair_table
from smbstat.mixing import (
    MixingProfile,
    alpha_coefficient,
    fit_decay,
    max_cylinder_decay,
    mixing_profile,
    phi_coefficient,
    psi_coefficient,
    psi_subset_sup,
)
from smbstat.model import MarkovModel


def closed_form_psi(delta):
    return 4 / 9 * 0.7 ** (delta + 1)


def brute_alpha(rho):
    """max over nonempty proper unions U (rows) and V (columns) of |sum_{U x V} rho|."""
    best = 0.0
    rows, cols = rho.shape
    for U in itertools.product([0, 1], repeat=rows):
        for V in itertools.product([0, 1], repeat=cols):
            best = max(best, abs(float(np.array(U) @ rho @ np.array(V))))
    return best


def test_bernoulli_coefficients_vanish(three_weights, geometric):
    for model in (three_weights, geometric):
        for d in (0, 2):
            assert psi_coefficient(model, 2, 1, d).value == 0.0
            assert phi_coefficient(model, 2, 1, d).value == 0.0
            assert alpha_coefficient(model, 2, 1, d).value == 0.0


def test_iid_rows_markov_coefficients_vanish():
    p = [0.2, 0.5, 0.3]
    m = MarkovModel([p, p, p])
    assert psi_coefficient(m, 2, 2, 0).value < 1e-15


@pytest.mark.parametrize("delta", range(0, 11))
def test_psi_closed_form_and_subset_sup(markov, delta):
    psi = psi_coefficient(markov, 1, 1, delta).value
    assert psi == pytest.approx(closed_form_psi(delta), abs=1e-10)
    assert psi_subset_sup(markov, 1, 1, delta) == pytest.approx(psi, abs=1e-10)


def test_psi_matches_direct_formula(markov):
    p, P = markov.p, markov.P
    P2 = P @ P
    direct = 0.5 * sum(p[a] * abs(P2[a, b] - p[b]) for a in range(2) for b in range(2))
    assert psi_coefficient(markov, 1, 1, 1).value == pytest.approx(direct, abs=1e-15)
    assert direct == pytest.approx(0.217778, abs=5e-7)


def test_psi_depends_only_on_boundary(markov):
    for d in (0, 1, 4):
        base = psi_coefficient(markov, 1, 1, d).value
        for n, m in ((2, 2), (3, 1), (1, 3), (3, 3)):
            assert psi_coefficient(markov, n, m, d).value == pytest.approx(base, abs=1e-14)


def test_phi_example(markov):
    assert phi_coefficient(markov, 1, 1, 0).value == pytest.approx(0.466667, abs=5e-7)
    # max_a 1/2 sum_b |P_ab - p_b|, attained at a = 2
    P, p = markov.P, markov.p
    per_row = [0.5 * sum(abs(P[a, b] - p[b]) for b in range(2)) for a in range(2)]
    assert per_row[1] >= per_row[0]
    assert phi_coefficient(markov, 1, 1, 0).value == pytest.approx(max(per_row), abs=1e-15)


def test_psi_below_phi_example(markov):
    assert psi_coefficient(markov, 1, 1, 0).value == pytest.approx(0.311111, abs=5e-7)
    assert psi_coefficient(markov, 1, 1, 0).value <= phi_coefficient(markov, 1, 1, 0).value


def test_alpha_exact_against_brute_force(markov):
    for d in (0, 2):
        rho = pair_table(markov, 1, 1, d).rho
        a = alpha_coefficient(markov, 1, 1, d, mode="exact")
        assert a.exact
        assert a.value == pytest.approx(brute_alpha(rho), abs=1e-15)
        assert a.value <= psi_coefficient(markov, 1, 1, d).value + 1e-15


def test_alpha_bounds_mode(markov):
    a = alpha_coefficient(markov, 3, 3, 0, mode="bounds")
    exact = alpha_coefficient(markov, 3, 3, 0, mode="exact").value
    assert not a.exact and a.lo <= exact <= a.hi + 1e-15
    assert a.hi == pytest.approx(psi_coefficient(markov, 3, 3, 0).value, abs=1e-15)


def test_alpha_exact_cap(markov):
    with pytest.raises(EnumerationCapError):
        alpha_coefficient(markov, 5, 5, 0, mode="exact", cap=4)
    with pytest.raises(ValidationError):
        alpha_coefficient(markov, 1, 1, 0, mode="other")


def test_subset_oracle_cap(markov):
    with pytest.raises(EnumerationCapError):
        psi_subset_sup(markov, 3, 3, 0)


def test_fit_decay_kinds():
    g = np.arange(1, 21)
    f = fit_decay(g, g ** -2.0)
    assert f.kind == "polynomial" and f.p == pytest.approx(2.0, abs=1e-6)
    f = fit_decay(g, 0.3 * 0.6**g)
    assert f.kind == "exponential" and f.theta == pytest.approx(0.6, abs=1e-12)
    assert fit_decay(g, np.zeros(g.size)).kind == "independent"
    f = fit_decay([0, 1, 2, 3], [0.5, 0.2, 0.3, 0.1])
    assert f.kind == "none" and f.r2 == 0.0


def test_mixing_profile_markov(markov):
    prof = mixing_profile(markov, range(0, 21), depths=[(1, 1), (2, 2)])
    assert prof.fit.kind == "exponential"
    assert prof.fit.theta == pytest.approx(0.7, abs=1e-3)
    assert all(a <= b + 1e-12 for a, b in zip(prof.psi, prof.phi))
    assert all(lo <= ps + 1e-12 for lo, ps in zip(prof.alpha_lo, prof.psi))
    assert all(b <= a + 1e-12 for a, b in zip(prof.psi, prof.psi[1:]))
    assert MixingProfile.from_dict(prof.to_dict()) == prof
    assert prof.csv_rows()[0][0] == 0


def test_mixing_profile_bernoulli(biased_coin):
    assert mixing_profile(biased_coin, [0, 1, 2]).fit.kind == "independent"


def test_mixing_profile_workers_identical(markov):
    a = mixing_profile(markov, range(8), depths=[(1, 1), (2, 1)], workers=1)
    b = mixing_profile(markov, range(8), depths=[(1, 1), (2, 1)], workers=4)
    assert a == b


def test_mixing_profile_empty_grid(markov):
    with pytest.raises(ValidationError):
        mixing_profile(markov, [])


def test_max_cylinder_decay(fair_coin, markov, geometric):
    r = max_cylinder_decay(fair_coin, range(1, 12))
    assert r["max_measures"] == [2.0**-n for n in range(1, 12)]
    assert r["fit"]["kind"] == "exponential"
    r = max_cylinder_decay(markov, range(1, 30))
    np.testing.assert_allclose(r["max_measures"], [(2 / 3) * 0.9 ** (n - 1) for n in range(1, 30)], rtol=1e-12)
    assert r["verdict"] == "consistent"
    assert max_cylinder_decay(geometric, range(1, 8))["max_measures"] == [2.0**-n for n in range(1, 8)]


def test_max_cylinder_decay_flags_slow_decay(monkeypatch):
    # measures shrinking like n^-0.1 are slower than theta^sqrt(n)
    from smbstat import mixing

    monkeypatch.setattr(mixing, "max_atom", lambda model, n: n**-0.1)
    assert max_cylinder_decay(object(), range(1, 200))["verdict"] == "inconsistent"
