"""Invariant suite run by ``smbstat verify``."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import oracle
from .errors import EnumerationCapError, SmbError
from .infostats import (
    PAIR_CAP,
    atom_table,
    lemma_checks,
    moment_report,
    refinement_depth,
    variance_identity_check,
    variance_rate_estimate,
)
from .mixing import alpha_coefficient, phi_coefficient, psi_coefficient, psi_subset_sup
from .model import MarkovModel, cylinder_measure, enumerate_cylinders

REL_TOL = 1e-9


@dataclass
class Check:
    name: str
    status: str  # "pass" | "fail" | "skip"
    detail: str

    def to_dict(self):
        return asdict(self)


def _depths(model, finite_max):
    # at tail mass 1e-12 a countable alphabet overruns the atom cap beyond depth 3
    return range(1, finite_max + 1) if model.alphabet_size is not None else range(1, 4)


def _close(a, b, rel=REL_TOL, abs_tol=1e-12):
    return math.isclose(a, b, rel_tol=rel, abs_tol=abs_tol)


def _consistency(model):
    K = model.alphabet_size
    if K is None:
        return Check("kolmogorov_consistency", "skip", "countable alphabet")
    worst = 0.0
    for c in enumerate_cylinders(model, 2).cylinders:
        ext = math.fsum(cylinder_measure(model, c.word + (a,)) for a in range(1, K + 1))
        worst = max(worst, abs(ext - c.measure))
        if isinstance(model, MarkovModel):
            pre = math.fsum(cylinder_measure(model, (a,) + c.word) for a in range(1, K + 1))
            worst = max(worst, abs(pre - c.measure))
    return Check("kolmogorov_consistency", "pass" if worst <= 1e-12 else "fail", f"max defect {worst:.3g}")


def _accounting(model):
    en = enumerate_cylinders(model, 3)
    m = np.asarray(en.masses)
    total = en.retained_mass + en.tail_mass
    ok = abs(total - 1.0) <= 1e-12 and bool(np.all(m > 0)) and bool(np.all(np.diff(m) <= 0))
    return Check("enumeration_accounting", "pass" if ok else "fail", f"retained + tail = {total!r}")


def _variance_identity(model):
    for n in (3, 2, 1):
        try:
            r = variance_identity_check(model, n)
        except EnumerationCapError:
            continue
        ok = _close(r["lhs"], r["rhs"], 1e-10)
        return Check("variance_identity", "pass" if ok else "fail", f"n={n}: {r['lhs']!r} vs {r['rhs']!r}")
    return Check("variance_identity", "skip", "too many atoms for the pairwise sum")


def _oracle_agreement(model):
    try:
        bad = []
        for n in _depths(model, 4):
            rep = moment_report(model, n, orders=(2.0,))
            H, s2 = oracle.exact_entropy(model, n), oracle.exact_variance(model, n)
            # truncated enumeration can only be trusted to the missing mass
            tol = max(REL_TOL, 1e3 * rep.tail_mass ** 0.5)
            if not (_close(rep.H_n, H, tol) and _close(rep.sigma2_n, s2, tol)):
                bad.append(n)
    except SmbError as exc:
        return Check("oracle_agreement", "skip", str(exc))
    return Check("oracle_agreement", "fail" if bad else "pass", f"mismatch at n={bad}" if bad else "H_n, sigma_n^2 agree")


def _variance_rate(model):
    if not isinstance(model, MarkovModel) or model.alphabet_size > 3:
        return Check("variance_rate_extrapolation", "skip", "only for small Markov chains")
    try:
        br = oracle.markov_variance(model.p, model.P)
    except SmbError as exc:
        return Check("variance_rate_extrapolation", "skip", str(exc))
    est = variance_rate_estimate(model, 12)["sigma2_hat"]
    ok = abs(est - br.sigma2) <= 1e-3
    return Check("variance_rate_extrapolation", "pass" if ok else "fail", f"series {br.sigma2!r} vs extrapolated {est!r}")


def _mixing(model):
    bad = []
    for delta in range(6):
        for n, m in ((1, 1), (2, 2)):
            try:
                psi = psi_coefficient(model, n, m, delta).value
                phi = phi_coefficient(model, n, m, delta).value
                alpha = alpha_coefficient(model, n, m, delta)
            except EnumerationCapError:
                continue
            tol = 1e-12
            if psi > phi + tol or alpha.lo > psi + tol or not (-tol <= psi <= 1 + tol):
                bad.append((delta, n, m))
        try:
            brute = psi_subset_sup(model, 1, 1, delta)
            if not _close(brute, psi_coefficient(model, 1, 1, delta).value, 1e-12, 1e-14):
                bad.append((delta, "subset"))
        except EnumerationCapError:
            pass
    return Check("mixing_order", "fail" if bad else "pass", f"violations {bad}" if bad else "alpha <= psi <= phi")


def _lemmas(model):
    out = []
    for w in (1.0, 2.0):
        try:
            k = refinement_depth(model, w, k_max=24)
            B = atom_table(model, k)
            if len(B) ** 2 > PAIR_CAP:
                raise EnumerationCapError("refined pair grid too large")
            res = lemma_checks(model, k, k, 0, w)
        except SmbError as exc:
            out.append(Check(f"lemmas_w{w:g}", "skip", str(exc)))
            continue
        bad = [c.name for c in res if not c.holds]
        out.append(Check(f"lemmas_w{w:g}", "fail" if bad else "pass", f"depth {k}; violated {bad}" if bad else f"depth {k}"))
    return out


def _iid(model):
    if not model.is_iid:
        return Check("iid_additivity", "skip", "not iid")
    s1 = oracle.variance_rate(model)
    bad = []
    for n in _depths(model, 5):
        rep = moment_report(model, n, orders=(2.0,))
        if not _close(rep.sigma2_n, n * s1, max(1e-10, 1e3 * rep.tail_mass ** 0.5)):
            bad.append(n)
    return Check("iid_additivity", "fail" if bad else "pass", f"mismatch at n={bad}" if bad else "sigma_n^2 = n sigma_1^2")


def run_suite(model) -> list:
    checks = [_consistency(model), _accounting(model), _variance_identity(model), _oracle_agreement(model)]
    checks += [_variance_rate(model), _mixing(model), _iid(model)]
    checks += _lemmas(model)
    return checks
