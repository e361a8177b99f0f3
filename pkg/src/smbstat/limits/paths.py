"""Trajectory-level diagnostics: iterated-logarithm maxima and interpolated paths."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .._mc import replicate_rng, parallel_map, blocks
from ..errors import DegenerateVarianceError, ValidationError
from ..model import CHUNK_ELEMENTS
from .. import oracle

LIL_K_MIN = 16  # log log k > 0 from here on
PATH_BLOCK = 500
GRID_TOL = 1e-12


def _rates(model) -> tuple:
    h = oracle.entropy_rate(model)
    s2 = oracle.variance_rate(model)
    if s2 <= 1e-14:
        raise DegenerateVarianceError(f"sigma^2 = {s2:.3g}: the information function has no fluctuations")
    return h, math.sqrt(s2)


def _stream(model, n: int, size: int, rng, visit):
    """Feed ``visit(k0, partial_sums)`` with consecutive chunks of ``I_k`` for ``k = k0+1..``."""
    step = model.information_increments(size, rng)
    length = max(1, CHUNK_ELEMENTS // max(size, 1))
    total = np.zeros(size)
    state = None
    k0 = 0
    while k0 < n:
        L = min(length, n - k0)
        inc, state = step(L, state)
        S = total[:, None] + np.cumsum(inc, axis=1)
        visit(k0, S)
        total = S[:, -1].copy()
        k0 += L


@dataclass
class LILReport:
    n_max: int
    N: int
    k_min: int
    h: float
    sigma: float
    maxima: list
    quantiles: dict
    median: float
    all_finite: bool
    seed: int | None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def lil_statistic(model, n_max: int, N: int, seed: int, k_min: int = LIL_K_MIN, workers: int | None = 1) -> LILReport:
    """Per-path ``max_{k_min <= k <= n_max} (I_k - k h) / (sigma sqrt(2 k log log k))``.

    Paths are streamed in chunks and only the running maximum is kept.
    """
    if n_max < 100:
        raise ValidationError(f"n_max must be >= 100, got {n_max}")
    if k_min < 16:
        raise ValidationError("k_min must be >= 16 so that log log k > 0")
    h, sigma = _rates(model)

    def run(block):
        index, size = block
        best = np.full(size, -np.inf)

        def visit(k0, S):
            k = np.arange(k0 + 1, k0 + 1 + S.shape[1], dtype=float)
            ok = k >= k_min
            if not ok.any():
                return
            k = k[ok]
            z = (S[:, ok] - k * h) / (sigma * np.sqrt(2.0 * k * np.log(np.log(k))))
            np.maximum(best, z.max(axis=1), out=best)

        _stream(model, n_max, size, replicate_rng(seed, index), visit)
        return best

    maxima = np.concatenate(parallel_map(run, blocks(N, PATH_BLOCK), workers))
    qs = {str(q): float(np.quantile(maxima, q)) for q in (0.05, 0.25, 0.5, 0.75, 0.95)}
    return LILReport(
        n_max, N, k_min, h, sigma, maxima.tolist(), qs, float(np.median(maxima)), bool(np.isfinite(maxima).all()), seed
    )


# ---------------------------------------------------------------------------
# invariance principle


@dataclass
class PathEnsemble:
    """``W(t) = (I_{tn} - tn h) / (sigma sqrt(n))``, linear between nodes ``k/n``."""

    n: int
    N: int
    t: np.ndarray
    values: np.ndarray  # (N, len(t))
    sigma_used: float
    h_used: float
    seed: int | None = None

    def csv_rows(self) -> list:
        """Rows ``(t, path_id, value)``."""
        rows = []
        for i, path in enumerate(self.values):
            rows.extend([float(t), i, float(v)] for t, v in zip(self.t, path))
        return rows

    def to_dict(self):
        d = asdict(self)
        d["t"] = self.t.tolist()
        d["values"] = self.values.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["t"] = np.asarray(d["t"], dtype=float)
        d["values"] = np.asarray(d["values"], dtype=float)
        return cls(**d)

    def column(self, s: float) -> np.ndarray:
        hit = np.flatnonzero(np.abs(self.t - s) <= GRID_TOL)
        if hit.size == 0:
            raise ValidationError(f"time {s} is not on the ensemble grid")
        return self.values[:, hit[0]]


def wip_paths(model, n: int, N: int, grid: Sequence[float] | int = 101, seed: int = 0, workers: int | None = 1) -> PathEnsemble:
    """``N`` interpolated paths on ``grid`` (a list of times in [0, 1] or a point count)."""
    if n < 1 or N < 1:
        raise ValidationError("n and N must be >= 1")
    t = np.linspace(0.0, 1.0, grid) if isinstance(grid, (int, np.integer)) else np.asarray(grid, dtype=float)
    if t.size == 0 or t.min() < 0.0 or t.max() > 1.0:
        raise ValidationError("grid times must lie in [0, 1]")
    h, sigma = _rates(model)
    pos = t * n
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n)
    frac = pos - lo
    need = np.union1d(lo, hi)
    need = need[need > 0]

    def run(block):
        index, size = block
        got: dict = {}

        def visit(k0, S):
            k = need[(need > k0) & (need <= k0 + S.shape[1])]
            for kk in k:
                got[int(kk)] = S[:, kk - k0 - 1]

        _stream(model, n, size, replicate_rng(seed, index), visit)

        def centred(k):
            if k == 0:
                return np.zeros(size)
            return (got[int(k)] - k * h) / (sigma * math.sqrt(n))

        cols = [(1.0 - f) * centred(a) + f * centred(b) if f > 0 else centred(a) for a, b, f in zip(lo, hi, frac)]
        return np.column_stack(cols)

    values = np.concatenate(parallel_map(run, blocks(N, PATH_BLOCK), workers))
    return PathEnsemble(n, N, t, values, sigma, h, seed)


def wip_diagnostics(ensemble: PathEnsemble, pairs: Sequence[tuple]) -> dict:
    """Increment variance and normality for each ``(s, t)``, and correlations of disjoint increments."""
    N = ensemble.N
    incs = []
    per_pair = []
    for s, t in pairs:
        if not 0.0 <= s <= t <= 1.0:
            raise ValidationError(f"need 0 <= s <= t <= 1, got ({s}, {t})")
        d = ensemble.column(t) - ensemble.column(s)
        incs.append(d)
        c = d - d.mean()
        var = float((c * c).mean())
        var_se = math.sqrt(max(float((c**4).mean()) - var * var, 0.0) / N)
        if t > s:
            ks = float(stats.kstest(d, "norm", args=(0.0, math.sqrt(t - s))).statistic)
        else:
            ks = 0.0
        per_pair.append({"s": s, "t": t, "variance": var, "variance_se": var_se, "expected": t - s, "ks": ks})
    corrs = []
    for i in range(len(pairs)):
        for j in range(i + 1, len(pairs)):
            (s1, t1), (s2, t2) = sorted([tuple(pairs[i]), tuple(pairs[j])])
            if t1 <= s2 and t1 > s1 and t2 > s2:
                corrs.append({
                    "first": [s1, t1],
                    "second": [s2, t2],
                    "correlation": float(np.corrcoef(incs[i], incs[j])[0, 1]),
                    "se": 1.0 / math.sqrt(N),
                })
    return {"N": N, "pairs": per_pair, "correlations": corrs}
