"""Distribution of the normalised information function and its distance to N(0, 1)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .._fit import linear_fit
from .._mc import replicate_rng, sample_blocks
from ..errors import DegenerateVarianceError, InsufficientSamplesError, ValidationError
from .. import oracle

KS_95 = 1.36  # 95% quantile of the Kolmogorov distribution, times sqrt(N)
GRID_POINTS = 512
GRID_RANGE = 4.0
VARIANCE_FLOOR = 1e-14
CENTERINGS = ("H_n", "nh")
SCALINGS = ("sigma_n", "sigma_sqrt_n")


def ks_noise_floor(N: int) -> float:
    return KS_95 / math.sqrt(N)


def ks_statistic(samples) -> float:
    """``sup_t |F_N(t) - N(t)|`` over the sample points (ties handled exactly)."""
    return float(stats.kstest(np.asarray(samples, dtype=float), "norm").statistic)


def normalisation(model, n: int, centering: str = "H_n", scaling: str = "sigma_n") -> tuple:
    """``(center, scale)`` for ``W = (I_n - center) / scale`` from closed forms."""
    if centering not in CENTERINGS:
        raise ValidationError(f"centering must be one of {CENTERINGS}, got {centering!r}")
    if scaling not in SCALINGS:
        raise ValidationError(f"scaling must be one of {SCALINGS}, got {scaling!r}")
    center = oracle.exact_entropy(model, n) if centering == "H_n" else n * oracle.entropy_rate(model)
    var = oracle.exact_variance(model, n) if scaling == "sigma_n" else n * oracle.variance_rate(model)
    if var <= VARIANCE_FLOOR * max(1.0, n):
        raise DegenerateVarianceError(
            f"degenerate variance ({var:.3g}): I_n is a.s. constant, no normal limit to compare with"
        )
    return center, math.sqrt(var)


@dataclass
class CLTReport:
    n: int
    N: int
    centering: str
    scaling: str
    center: float
    scale: float
    t_grid: list
    Xi_n: list
    ks: float
    noise_floor: float
    seed: int | None
    flags: list = field(default_factory=list)

    def csv_rows(self) -> list:
        """Rows ``(t, Xi_n, N(t))``."""
        return [[t, x, float(stats.norm.cdf(t))] for t, x in zip(self.t_grid, self.Xi_n)]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def clt_report_from_draws(
    draws,
    n: int,
    seed: int | None = None,
    centering: str = "H_n",
    scaling: str = "sigma_n",
    center: float = 0.0,
    scale: float = 1.0,
) -> CLTReport:
    """Report for already normalised draws of ``W``; also the injection hook for tests."""
    w = np.sort(np.asarray(draws, dtype=float))
    N = w.size
    if N == 0:
        raise InsufficientSamplesError("no draws")
    t = np.linspace(-GRID_RANGE, GRID_RANGE, GRID_POINTS)
    xi = np.searchsorted(w, t, side="right") / N
    return CLTReport(
        n, N, centering, scaling, center, scale, t.tolist(), xi.tolist(), ks_statistic(w), ks_noise_floor(N), seed
    )


def sample_normalised(model, n: int, N: int, seed: int, center: float, scale: float, workers: int | None = 1) -> np.ndarray:
    draws = sample_blocks(lambda size, rng: model.sample_information(n, size, rng), N, seed, workers)
    return (draws - center) / scale


def clt_sample(
    model,
    n: int,
    N: int,
    seed: int,
    centering: str = "H_n",
    scaling: str = "sigma_n",
    workers: int | None = 1,
) -> CLTReport:
    """Draw ``N`` copies of ``W = (I_n - center) / scale`` and compare with N(0, 1).

    The default normalisation ``(H_n, sigma_n)`` avoids the ``H_n - nh`` drift at
    moderate ``n``; ``("nh", "sigma_sqrt_n")`` gives the asymptotic normalisation.
    """
    if n < 1 or N < 1:
        raise ValidationError(f"n and N must be >= 1, got n={n}, N={N}")
    center, scale = normalisation(model, n, centering, scaling)
    w = sample_normalised(model, n, N, seed, center, scale, workers)
    return clt_report_from_draws(w, n, seed, centering, scaling, center, scale)


# ---------------------------------------------------------------------------
# rate of convergence


@dataclass
class RateReport:
    n_grid: list
    ks_values: list
    adjusted_ks: list
    kappa_hat: float
    ci: list
    noise_floor: float
    used: list
    seed: int | None = None
    flags: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _kappa(ns, adjusted) -> tuple:
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(adjusted, dtype=float))
    a, b, _ = linear_fit(x, y)
    k = x.size
    if k > 2:
        resid = y - (a + b * x)
        se = math.sqrt(float((resid**2).sum()) / (k - 2) / float(((x - x.mean()) ** 2).sum()))
    else:
        se = 0.0
    return -b, se


def fit_rate(n_grid: Sequence[float], ks_values: Sequence[float], N: int | None = None) -> RateReport:
    """``kappa`` in ``ks ~ C n^-kappa`` after removing the KS sampling floor in quadrature.

    With ``N=None`` no floor is removed (exact regression). Points at or below
    the floor are dropped; if that leaves fewer than half the grid, or fewer
    than two points, a larger ``N`` is needed.
    """
    ns = np.asarray(n_grid, dtype=float)
    ks = np.asarray(ks_values, dtype=float)
    if ns.size != ks.size or ns.size < 2:
        raise ValidationError("n_grid and ks_values must have equal length >= 2")
    floor = 0.0 if N is None else ks_noise_floor(N)
    adj = np.sqrt(np.maximum(ks**2 - floor**2, 0.0))
    used = adj > 0
    if (~used).sum() * 2 >= ns.size or used.sum() < 2:
        raise InsufficientSamplesError(
            f"KS at or below the noise floor {floor:.3g} on {(~used).sum()} of {ns.size} grid points; increase N"
        )
    kappa, se = _kappa(ns[used], adj[used])
    q = stats.t.ppf(0.975, max(int(used.sum()) - 2, 1)) if used.sum() > 2 else 0.0
    return RateReport(
        ns.tolist(), ks.tolist(), adj.tolist(), kappa, [kappa - q * se, kappa + q * se], floor, used.tolist()
    )


def rate_fit(
    model,
    n_grid: Sequence[int],
    N: int,
    seed: int,
    centering: str = "H_n",
    scaling: str = "sigma_n",
    bootstrap: int = 100,
    workers: int | None = 1,
) -> RateReport:
    """KS distance across ``n_grid`` and the fitted exponent, with a bootstrap interval.

    The interval resamples each grid point's draws with replacement and
    refits; it is widened if necessary so that it contains the point estimate.
    """
    ns = [int(round(n)) for n in n_grid]
    if len(ns) < 4:
        raise ValidationError("rate fitting needs at least 4 grid points")
    if max(ns) < 10 * min(ns):
        raise ValidationError("n_grid must span at least one decade")
    samples = []
    for j, n in enumerate(ns):
        sub_seed = int(np.random.SeedSequence(int(seed), spawn_key=(j,)).generate_state(1)[0])
        center, scale = normalisation(model, n, centering, scaling)
        samples.append(np.sort(sample_normalised(model, n, N, sub_seed, center, scale, workers)))
    ks = [ks_statistic(w) for w in samples]
    rep = fit_rate(ns, ks, N)
    rep.seed = seed
    if bootstrap > 0:
        rng = replicate_rng(seed, len(ns))
        kappas = []
        for _ in range(bootstrap):
            boot = [ks_statistic(w[rng.integers(0, w.size, w.size)]) for w in samples]
            try:
                kappas.append(fit_rate(ns, boot, N).kappa_hat)
            except InsufficientSamplesError:
                continue
        if len(kappas) >= 10:
            lo, hi = np.percentile(kappas, [2.5, 97.5])
            rep.ci = [float(min(lo, rep.kappa_hat)), float(max(hi, rep.kappa_hat))]
        else:
            rep.flags.append("bootstrap mostly below the noise floor; interval from regression error")
    return rep
