"""Exchangeable-pair diagnostic for the blocked information function.

``n = r m + (r - 1) delta`` symbols are split into ``r`` blocks of length
``m`` separated by gaps of ``delta``. The blocks are replaced by independent
copies ``X_j`` of ``J_m / sigma_m`` and ``V = r^{-1/2} sum X_j``; ``V'``
swaps a uniformly chosen summand for a fresh copy, so ``E(V'|V) = (1 - 1/r) V``.
The Stein bound on ``sup_t |P(V <= t) - N(t)|`` is

    (6 / lambda) sqrt(Var E((V' - V)^2 | V)) + 6 sqrt(E|V' - V|^3 / lambda)

with ``lambda = 1/r``. Both expectations are estimated by Monte Carlo; the
variance term conditions on all of ``X_0..X_{r-1}``, which can only enlarge it.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .._mc import sample_blocks
from ..errors import DegenerateVarianceError, ValidationError
from .. import oracle
from .clt import ks_statistic

DEFAULT_BLOCK_EXPONENT = 0.6
EXPONENTIAL_GAP_EXPONENT = 0.25
DEFAULT_MOMENT_ORDER = 4.5


def stein_defaults(n: int, mixing: str = "exponential", power: float | None = None, w: float = DEFAULT_MOMENT_ORDER) -> dict:
    """Block length ``m``, gap ``delta`` and block count ``r`` for a total length ``n``.

    ``m = ceil(n^a)`` and ``delta = ceil(m^d)``. Exponential mixing uses
    ``a = 3/5`` and a short gap ``d = 1/4``; polynomial mixing with power ``p``
    balances the gap against ``psi(delta) ~ delta^-p`` using moment order ``w``.
    """
    if n < 4:
        raise ValidationError("n must be >= 4")
    if mixing == "exponential":
        a, d = DEFAULT_BLOCK_EXPONENT, EXPONENTIAL_GAP_EXPONENT
    elif mixing == "polynomial":
        if power is None or power <= 0:
            raise ValidationError("polynomial mixing needs a positive power")
        denom = (power + 2.0) * (w - 2.0) + 6.0
        a = 0.6 + 2.4 * w / denom
        d = (3.0 * w / denom) / a
    else:
        raise ValidationError(f"unknown mixing class {mixing!r}")
    m = math.ceil(n**a)
    delta = math.ceil(m**d)
    r = max(2, (n + delta) // (m + delta))
    return {"m": m, "delta": delta, "r": r, "n": n}


@dataclass
class SteinReport:
    r: int
    m: int
    delta: int
    n: int
    N: int
    lam: float
    variance_term: float
    variance_term_se: float
    third_moment_term: float
    third_moment_term_se: float
    bound: float
    bound_se: float
    observed_ks: float
    ks_se: float
    slope: float
    slope_se: float
    exchange_ks: float
    exchange_pvalue: float
    antisymmetry_ks: float
    antisymmetry_pvalue: float
    seed: int | None
    flags: list = field(default_factory=list)

    @property
    def bound_holds(self) -> bool:
        return self.observed_ks <= self.bound + 3.0 * math.hypot(self.bound_se, self.ks_se)

    @property
    def slope_consistent(self) -> bool:
        return abs(self.slope - (1.0 - self.lam)) <= 3.0 * self.slope_se

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _sd_se(x: np.ndarray) -> tuple:
    """Sample sd and the delta-method standard error of the sd."""
    c = x - x.mean()
    var = float((c * c).mean())
    m4 = float((c**4).mean())
    se_var = math.sqrt(max(m4 - var * var, 0.0) / x.size)
    sd = math.sqrt(var)
    return sd, (se_var / (2.0 * sd) if sd > 0 else 0.0)


def stein_diagnostic(model, m: int, delta: int, r: int, N: int, seed: int, workers: int | None = 1) -> SteinReport:
    if r < 2:
        raise ValidationError(f"need at least 2 blocks, got r={r}")
    if m < 1 or delta < 0 or N < 2:
        raise ValidationError("need m >= 1, delta >= 0 and N >= 2")
    H = oracle.exact_entropy(model, m)
    var = oracle.exact_variance(model, m)
    if var <= 1e-14 * m:
        raise DegenerateVarianceError(f"sigma_m^2 = {var:.3g}: blocks are a.s. constant")
    sigma = math.sqrt(var)
    root_r = math.sqrt(r)

    def draw(size, rng):
        X = (model.sample_information(m, size * (r + 1), rng).reshape(size, r + 1) - H) / sigma
        Y = rng.integers(0, r, size)
        blocks, fresh = X[:, :r], X[:, r]
        replaced = blocks[np.arange(size), Y]
        V = blocks.sum(axis=1) / root_r
        D = (fresh - replaced) / root_r
        cond = (r + (blocks * blocks).sum(axis=1)) / r**2  # E((V'-V)^2 | X_0..X_{r-1})
        return np.column_stack([V, V + D, cond, np.abs(fresh - replaced) ** 3])

    out = sample_blocks(lambda s, g: draw(s, g).ravel(), N, seed, workers).reshape(N, 4)
    V, Vp, cond, cube = out.T
    lam = 1.0 / r

    sd_cond, sd_cond_se = _sd_se(cond)
    variance_term = 6.0 * r * sd_cond
    variance_term_se = 6.0 * r * sd_cond_se

    # E|V'-V|^3 / lambda = r^{-1/2} E|X* - X_Y|^3
    cube_mean = float(cube.mean())
    cube_se = float(cube.std(ddof=1)) / math.sqrt(N)
    inner = cube_mean / root_r
    third = 6.0 * math.sqrt(inner)
    third_se = 6.0 * cube_se / root_r / (2.0 * math.sqrt(inner)) if inner > 0 else 0.0

    slope, intercept, _, _, slope_se = stats.linregress(V, Vp)
    exch = stats.ks_2samp(V, Vp)
    diff = Vp - V
    anti = stats.ks_2samp(diff, -diff)
    return SteinReport(
        r=r,
        m=m,
        delta=delta,
        n=r * m + (r - 1) * delta,
        N=N,
        lam=lam,
        variance_term=variance_term,
        variance_term_se=variance_term_se,
        third_moment_term=third,
        third_moment_term_se=third_se,
        bound=variance_term + third,
        bound_se=math.hypot(variance_term_se, third_se),
        observed_ks=ks_statistic(V),
        ks_se=0.5 / math.sqrt(N),
        slope=float(slope),
        slope_se=float(slope_se),
        exchange_ks=float(exch.statistic),
        exchange_pvalue=float(exch.pvalue),
        antisymmetry_ks=float(anti.statistic),
        antisymmetry_pvalue=float(anti.pvalue),
        seed=seed,
    )
