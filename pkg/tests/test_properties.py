"""Property-based checks of the invariants on randomly generated models."""

import itertools
import math

import numpy as np
from hypothesis import assume, given
from hypothesis import strategies as st

from smbstat import oracle
from smbstat._mc import replicate_rng
from smbstat.errors import EnumerationCapError
from smbstat.infostats import (
    PAIR_CAP,
    atom_table,
    entropy_additivity_defect,
    lemma_checks,
    moment_report,
    refinement_depth,
    variance_identity_check,
)
from smbstat.mixing import alpha_coefficient, mixing_profile, phi_coefficient, psi_coefficient, psi_subset_sup
from smbstat.model import BernoulliModel, MarkovModel, TruncationPolicy, cylinder_measure, enumerate_cylinders

seeds = st.integers(0, 2**32 - 1)
sizes = st.integers(2, 4)


def bernoulli(seed, K, conc=1.0):
    return BernoulliModel(np.random.default_rng(seed).dirichlet(np.full(K, conc)))


def markov(seed, K, conc=1.0):
    return MarkovModel(np.random.default_rng(seed).dirichlet(np.full(K, conc), size=K))


any_model = st.builds(lambda s, K, kind: (bernoulli if kind else markov)(s, K), seeds, sizes, st.booleans())


@given(any_model, st.integers(0, 3))
def test_kolmogorov_consistency(model, n):
    K = model.alphabet_size
    for word in itertools.product(range(1, K + 1), repeat=n):
        mu = cylinder_measure(model, word)
        ext = math.fsum(cylinder_measure(model, word + (a,)) for a in range(1, K + 1))
        pre = math.fsum(cylinder_measure(model, (a,) + word) for a in range(1, K + 1))
        assert abs(ext - mu) <= 1e-12
        assert abs(pre - mu) <= 1e-12


@given(any_model, st.integers(1, 5), st.sampled_from([0.0, 1e-6, 1e-3]))
def test_enumeration_accounting(model, n, eps):
    en = enumerate_cylinders(model, n, TruncationPolicy(tail_mass=eps))
    m = np.array(en.masses)
    assert np.all(m > 0)
    assert np.all(np.diff(m) <= 0)
    assert 1 - 1e-12 <= en.retained_mass + en.tail_mass <= 1 + 1e-12
    for c in en.cylinders:
        assert c.measure <= cylinder_measure(model, c.word[:-1]) + 1e-15


@given(seeds, st.integers(1, 20))
def test_geometric_enumeration_accounting(seed, n_atoms):
    from smbstat.model import GeometricModel

    q = 0.05 + 0.9 * np.random.default_rng(seed).random()
    en = enumerate_cylinders(GeometricModel(q), 2, TruncationPolicy(tail_mass=1e-9, max_atoms=n_atoms))
    assert abs(en.retained_mass + en.tail_mass - 1) <= 1e-12


@given(any_model, st.integers(1, 4))
def test_variance_identity(model, n):
    r = variance_identity_check(model, n)
    assert math.isclose(r["lhs"], r["rhs"], rel_tol=1e-9, abs_tol=1e-12)


@given(seeds, sizes, st.integers(1, 6))
def test_iid_exactness(seed, K, n):
    model = bernoulli(seed, K)
    one = moment_report(model, 1)
    r = moment_report(model, n)
    assert math.isclose(r.H_n, n * one.H_n, rel_tol=1e-12)
    assert math.isclose(r.sigma2_n, n * one.sigma2_n, rel_tol=1e-10, abs_tol=1e-14)
    expected = n * one.M4 + 3 * n * (n - 1) * one.sigma2_n**2
    assert math.isclose(r.M4, expected, rel_tol=1e-10, abs_tol=1e-14)


@given(any_model)
def test_oracle_sigma2_n(model):
    for n in (1, 2, 5):
        assert math.isclose(moment_report(model, n).sigma2_n, oracle.exact_variance(model, n), rel_tol=1e-9, abs_tol=1e-13)


@given(seeds, sizes, st.integers(1, 2), st.integers(1, 2), st.integers(0, 4))
def test_mixing_order(seed, K, n, m, delta):
    model = markov(seed, K)
    psi = psi_coefficient(model, n, m, delta).value
    phi = phi_coefficient(model, n, m, delta).value
    alpha = alpha_coefficient(model, n, m, delta)
    assert 0 <= psi <= 1 and 0 <= phi <= 1
    assert psi <= phi + 1e-12
    assert alpha.value <= psi + 1e-12


@given(seeds, st.integers(2, 3), st.integers(0, 3))
def test_half_sum_equals_subset_sup(seed, K, delta):
    model = markov(seed, K)
    assume(K * K <= 12)
    assert abs(psi_subset_sup(model, 1, 1, delta) - psi_coefficient(model, 1, 1, delta).value) <= 1e-15


@given(seeds, sizes)
def test_profile_non_increasing(seed, K):
    model = markov(seed, K)
    prof = mixing_profile(model, range(0, 8), depths=[(1, 1), (2, 1)])
    assert all(b <= a + 1e-12 for a, b in zip(prof.psi, prof.psi[1:]))
    assert all(b <= a + 1e-12 for a, b in zip(prof.phi, prof.phi[1:]))


@given(seeds, sizes)
def test_markov_boundary_exactness(seed, K):
    model = markov(seed, K)
    base = psi_coefficient(model, 1, 1, 1).value
    assert math.isclose(psi_coefficient(model, 2, 2, 1).value, base, rel_tol=1e-12, abs_tol=1e-15)


@given(seeds, st.integers(2, 3))
def test_markov_entropy_additivity_decay(seed, K):
    model = markov(seed, K, conc=3.0)
    lam = model.second_eigenvalue_modulus()
    assume(0.05 < lam < 0.95)
    defects = [abs(entropy_additivity_defect(model, 1, 1, d)) for d in range(8)]
    c = defects[0] / lam**0
    assert all(dv <= c * lam**d * (1 + 1e-9) + 1e-15 for d, dv in enumerate(defects))


@given(seeds, sizes, st.sampled_from([1.0, 1.5, 2.0]), st.booleans())
def test_lemma_inequalities(seed, K, w, iid):
    model = (bernoulli if iid else markov)(seed, K, conc=4.0)
    k = refinement_depth(model, w)
    assume(len(atom_table(model, k)) ** 2 <= PAIR_CAP // 4)
    for delta in (0, 1):
        for check in lemma_checks(model, k, k, delta, w):
            assert check.holds, check
    if iid:
        assert abs(entropy_additivity_defect(model, k, k, 0)) <= 1e-12


@given(seeds, st.integers(2, 3), st.sampled_from([1.0, 2.0]))
def test_growth_bound(seed, K, w):
    model = markov(seed, K, conc=4.0)
    k = refinement_depth(model, w)
    assume(K ** (3 * k) <= 200_000)
    base = moment_report(model, k, orders=(w,)).K_w[0] ** (1 / w)
    for j in (2, 3):
        assert moment_report(model, j * k, orders=(w,)).K_w[0] ** (1 / w) <= j * base + 1e-12


@given(seeds, st.integers(0, 50), st.integers(51, 100))
def test_replicate_streams_uncorrelated(seed, i, j):
    n = 20_000
    a = replicate_rng(seed, i).random(n)
    b = replicate_rng(seed, j).random(n)
    assert abs(np.corrcoef(a, b)[0, 1]) <= 3 / math.sqrt(n) * 1.5


@given(any_model, st.integers(1, 4))
def test_expected_centered_information_is_zero(model, n):
    t = atom_table(model, n)
    info = -np.log(t.measure)
    H = math.fsum(t.measure * info)
    assert abs(math.fsum(t.measure * (info - H))) <= 1e-12 * max(1.0, H)
