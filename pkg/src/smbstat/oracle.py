"""Closed-form entropy and variance for Bernoulli and Markov measures.

These are the reference values every enumeration- or Monte-Carlo-based
estimate is checked against.

Markov variance
---------------
Write ``f(a, b) = -log P[a, b]``. Then ``I_n = -log p[x_1] + sum_j f(x_j, x_{j+1})``
and the asymptotic variance is the long-run variance of ``f``::

    sigma^2 = c(0) + 2 * sum_{L >= 1} c(L),   c(L) = Cov(f_0, f_L).

``markov_correlation_term(p, P, k)`` returns
``sum_{x in A^{k+1}} mu(x) log P[x1,x2] log P[xk,x_{k+1}] - h^2``, which is
``c(k - 1)``: the ``k = 1`` term is the lag-zero variance and equals the
pairwise "main term" ``1/2 sum p_i P_ij p_k P_kl log^2(P_ij / P_kl)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NonErgodicError, NonStationaryError, ValidationError
from .model import BernoulliModel, GeometricModel, MarkovModel, MeasureModel, STATIONARY_TOL

LAMBDA2_LIMIT = 1.0 - 1e-9
ROUNDING_FLOOR = 64 * np.finfo(float).eps


def _weights(weights) -> np.ndarray:
    if isinstance(weights, BernoulliModel):
        return weights.weights
    return np.asarray(weights, dtype=float)


def _xlogx_terms(w: np.ndarray) -> np.ndarray:
    pos = w > 0
    out = np.zeros_like(w)
    out[pos] = -np.log(w[pos])
    return out


def bernoulli_entropy(weights) -> float:
    """``h = sum p_j |log p_j|`` in nats. Accepts weights or a Bernoulli/Geometric model."""
    if isinstance(weights, GeometricModel):
        q = weights.q
        return -math.log1p(-q) - q * math.log(q) / (1.0 - q)
    w = _weights(weights)
    return math.fsum(w * _xlogx_terms(w))


def bernoulli_variance(weights) -> float:
    """``sigma^2 = 1/2 sum_ij p_i p_j log^2(p_i / p_j)`` (pairwise form)."""
    if isinstance(weights, GeometricModel):
        q = weights.q
        return math.log(q) ** 2 * q / (1.0 - q) ** 2
    w = _weights(weights)
    w = w[w > 0]
    lw = np.log(w)
    diff = lw[:, None] - lw[None, :]
    return 0.5 * math.fsum((np.outer(w, w) * diff * diff).ravel())


def _check_markov(p, P):
    p = np.asarray(p, dtype=float)
    P = np.asarray(P, dtype=float)
    resid = float(np.abs(p @ P - p).sum())
    if resid > STATIONARY_TOL:
        raise NonStationaryError(f"p is not stationary for P (|pP - p|_1 = {resid:.3g})")
    return p, P


def _neglog(P: np.ndarray) -> np.ndarray:
    out = np.zeros_like(P)
    pos = P > 0
    out[pos] = -np.log(P[pos])
    return out


def markov_entropy(p, P) -> float:
    """``h = -sum_ij p_i P_ij log P_ij``."""
    p, P = _check_markov(p, P)
    return math.fsum((p[:, None] * P * _neglog(P)).ravel())


def markov_correlation_term(p, P, k: int) -> float:
    """``E[log P(x1,x2) log P(xk,x_{k+1})] - h^2`` by transfer recursion, O(k K^2)."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    p, P = _check_markov(p, P)
    f = _neglog(P)
    h = math.fsum((p[:, None] * P * f).ravel())
    if k == 1:
        return math.fsum((p[:, None] * P * f * f).ravel()) - h * h
    u = (p[:, None] * P * f).sum(axis=0)  # u_b = sum_a p_a P_ab f_ab
    g = (P * f).sum(axis=1)  # g_b = E[f(b, .)]
    for _ in range(k - 2):
        u = u @ P
    return float(u @ g) - h * h


def second_eigenvalue_modulus(p, P, squarings: int = 40) -> float:
    """Spectral radius of ``P - 1 p^T`` (i.e. ``|lambda_2|``) by Gelfand's formula.

    Repeated squaring with renormalisation: ``||M^(2^j)||^(1/2^j)``.
    """
    p = np.asarray(p, dtype=float)
    P = np.asarray(P, dtype=float)
    A = P - np.outer(np.ones(P.shape[0]), p)
    s = np.linalg.norm(A, 2)
    if s == 0.0:
        return 0.0
    A = A / s
    log_c = math.log(s)
    for _ in range(squarings):
        A = A @ A
        s = np.linalg.norm(A, 2)
        if s == 0.0 or not np.isfinite(s):
            return 0.0
        A /= s
        log_c = 2.0 * log_c + math.log(s)
    return math.exp(log_c / 2.0**squarings)


@dataclass
class MarkovVarianceBreakdown:
    main_term: float
    # 2 * Cov(f_0, f_L) for L = 1 .. truncation_K - 1
    correlation_terms: list
    # Cov(f_0, f_L) for L = 0 .. truncation_K - 1 (the k-indexed terms, k = L + 1)
    covariances: list
    truncation_K: int
    tail_bound: float
    sigma2: float
    lambda2: float
    entropy: float
    flags: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def markov_variance(p, P, tail_tol: float = 1e-12, max_terms: int = 1_000_000) -> MarkovVarianceBreakdown:
    """Asymptotic variance ``lim sigma_n^2 / n`` of a stationary Markov measure.

    The covariance series is summed until a geometric tail bound falls below
    ``tail_tol``. The bound is ``2 |term_K| r / (1 - r)``, doubled, with ``r``
    the larger of ``|lambda_2|`` and the mean ratio of the last five terms.
    """
    p, P = _check_markov(p, P)
    f = _neglog(P)
    h = math.fsum((p[:, None] * P * f).ravel())
    c0 = math.fsum((p[:, None] * P * f * f).ravel()) - h * h
    lam2 = second_eigenvalue_modulus(p, P)
    if c0 <= 1e-300:
        # f is a.s. constant on the support (e.g. deterministic transitions)
        return MarkovVarianceBreakdown(0.0, [], [0.0], 1, 0.0, 0.0, lam2, h, ["constant step information"])
    if lam2 >= LAMBDA2_LIMIT:
        raise NonErgodicError(f"|lambda_2| = {lam2:.12f}: correlation series convergence not assured", P)

    covs = [c0]
    u = (p[:, None] * P * f).sum(axis=0)
    g = (P * f).sum(axis=1)
    tail = math.inf
    while len(covs) < max_terms:
        covs.append(float(u @ g) - h * h)
        u = u @ P
        if len(covs) >= 7:
            last = np.abs(np.asarray(covs[-6:]))
            if last.max() <= ROUNDING_FLOOR * (c0 + h * h):
                # correlations already at rounding level (e.g. iid rows)
                tail = float(last.max())
            else:
                with np.errstate(divide="ignore", invalid="ignore"):
                    ratios = last[1:] / last[:-1]
                rhat = float(np.exp(np.mean(np.log(ratios)))) if np.all(ratios > 0) else 1.0
                r = max(rhat, lam2)
                tail = math.inf if r >= 1.0 else 2.0 * (2.0 * last[-1] * r / (1.0 - r))
            if tail < tail_tol:
                break
    flags = [] if tail < tail_tol else [f"tail bound {tail:.3g} above tolerance after {len(covs)} terms"]
    corr = [2.0 * c for c in covs[1:]]
    sigma2 = c0 + math.fsum(corr)
    return MarkovVarianceBreakdown(
        main_term=markov_main_term(p, P),
        correlation_terms=corr,
        covariances=covs,
        truncation_K=len(covs),
        tail_bound=tail,
        sigma2=sigma2,
        lambda2=lam2,
        entropy=h,
        flags=flags,
    )


def markov_main_term(p, P) -> float:
    """``1/2 sum_{ijkl} p_i P_ij p_k P_kl log^2(P_ij / P_kl)`` over positive transitions."""
    p = np.asarray(p, dtype=float)
    P = np.asarray(P, dtype=float)
    w = (p[:, None] * P).ravel()
    pos = w > 0
    w = w[pos]
    lp = np.log(P.ravel()[pos])
    d = lp[:, None] - lp[None, :]
    return 0.5 * math.fsum((np.outer(w, w) * d * d).ravel())


def markov_sigma2_n(p, P, n: int) -> float:
    """Exact ``sigma_n^2 = Var(I_n)`` for a stationary Markov measure, O(n K^2)."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    p, P = _check_markov(p, P)
    g0 = _xlogx_terms(p)
    H1 = math.fsum(p * g0)
    var_g = math.fsum(p * g0 * g0) - H1 * H1
    if n == 1:
        return var_g
    f = _neglog(P)
    h = math.fsum((p[:, None] * P * f).ravel())
    row = (P * f).sum(axis=1)
    var_f = math.fsum((p[:, None] * P * f * f).ravel()) - h * h
    total = var_g + (n - 1) * var_f
    # Cov(g(x1), f(x_j, x_{j+1})), j = 1..n-1
    v = p * g0
    acc = []
    for _ in range(n - 1):
        acc.append(float(v @ row) - H1 * h)
        v = v @ P
    total += 2.0 * math.fsum(acc)
    # Cov(f_i, f_{i+L}), L = 1..n-2, weight (n-1-L)
    u = (p[:, None] * P * f).sum(axis=0)
    acc = []
    for L in range(1, n - 1):
        acc.append((n - 1 - L) * (float(u @ row) - h * h))
        u = u @ P
    total += 2.0 * math.fsum(acc)
    return total


# ---------------------------------------------------------------------------
# model dispatch


def entropy_rate(model: MeasureModel) -> float:
    if isinstance(model, GeometricModel):
        return bernoulli_entropy(model)
    if isinstance(model, BernoulliModel):
        return bernoulli_entropy(model.weights)
    if isinstance(model, MarkovModel):
        return markov_entropy(model.p, model.P)
    raise ValidationError(f"no closed-form entropy for {type(model).__name__}")


def variance_rate(model: MeasureModel, tail_tol: float = 1e-12) -> float:
    if isinstance(model, GeometricModel):
        return bernoulli_variance(model)
    if isinstance(model, BernoulliModel):
        return bernoulli_variance(model.weights)
    if isinstance(model, MarkovModel):
        return markov_variance(model.p, model.P, tail_tol).sigma2
    raise ValidationError(f"no closed-form variance for {type(model).__name__}")


def exact_entropy(model: MeasureModel, n: int) -> float:
    """``H_n = H(A^n)`` in closed form."""
    if isinstance(model, (BernoulliModel, GeometricModel)):
        return n * entropy_rate(model)
    if isinstance(model, MarkovModel):
        return bernoulli_entropy(model.p) + (n - 1) * markov_entropy(model.p, model.P)
    raise ValidationError(f"no closed-form H_n for {type(model).__name__}")


def exact_variance(model: MeasureModel, n: int) -> float:
    """``sigma_n^2 = Var(I_n)`` in closed form."""
    if isinstance(model, (BernoulliModel, GeometricModel)):
        return n * variance_rate(model)
    if isinstance(model, MarkovModel):
        return markov_sigma2_n(model.p, model.P, n)
    raise ValidationError(f"no closed-form sigma_n^2 for {type(model).__name__}")
