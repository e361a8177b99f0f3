"""Dependence coefficients between cylinder partitions separated by a gap.

For ``B`` ranging over ``A^n`` and ``C`` over ``T^{-delta-n} A^m`` with
``rho(B, C) = mu(B & C) - mu(B) mu(C)``:

* ``psi``: sup over sets ``S`` of pairs of ``|sum_S rho|``, equal to ``1/2 sum |rho|``
  because ``rho`` sums to zero over the full product of two partitions;
* ``phi``: sup over ``B`` of the total variation between ``mu(.|B)`` and ``mu``;
* ``alpha``: sup over unions ``U`` of ``B`` atoms and ``V`` of ``C`` atoms of
  ``|mu(U & V) - mu(U) mu(V)|``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ._fit import linear_fit
from ._mc import parallel_map
from .errors import EnumerationCapError, ValidationError
from .infostats import max_atom, pair_table

FLAG_TAIL = 1e-9
PHI_ATOM_FLOOR = 1e-15
ALPHA_EXACT_CAP = 20  # smaller side of the pair grid, in atoms
SUBSET_ORACLE_CAP = 20  # pairs
MONOTONE_TOL = 1e-12
INDEPENDENT_TOL = 1e-13
DEFAULT_DEPTHS = tuple((n, m) for n in (1, 2, 3) for m in (1, 2, 3))


@dataclass
class CoefficientEstimate:
    value: float
    error: float = 0.0
    flags: list = field(default_factory=list)

    def __float__(self):
        return float(self.value)


@dataclass
class AlphaEstimate:
    lo: float
    hi: float
    exact: bool
    flags: list = field(default_factory=list)

    @property
    def value(self) -> float:
        return self.lo if self.exact else self.hi


def _tail_flags(t) -> list:
    miss = t.missing_mass
    return [f"truncated pair mass {miss:.3g}"] if miss > FLAG_TAIL else []


def _independent(model, delta) -> bool:
    # product measure: rho vanishes identically, no enumeration needed
    return model.gap_matrix(delta) is None


def psi_coefficient(model, n: int, m: int, delta: int, policy=None) -> CoefficientEstimate:
    if _independent(model, delta):
        return CoefficientEstimate(0.0)
    t = pair_table(model, n, m, delta, policy)
    value = 0.5 * math.fsum(np.abs(t.rho).ravel())
    # unseen pairs carry at most mu(B & C) + mu(B) mu(C) each
    return CoefficientEstimate(value, t.missing_mass, _tail_flags(t))


def phi_coefficient(model, n: int, m: int, delta: int, policy=None) -> CoefficientEstimate:
    if _independent(model, delta):
        return CoefficientEstimate(0.0)
    t = pair_table(model, n, m, delta, policy)
    muB = t.B.measure
    keep = muB >= PHI_ATOM_FLOOR
    cond = t.joint[keep] / muB[keep, None]
    tv = 0.5 * np.abs(cond - t.C.measure[None, :]).sum(axis=1)
    excluded = math.fsum(muB[~keep])
    flags = _tail_flags(t)
    if excluded > 0:
        flags.append(f"{int((~keep).sum())} atoms below {PHI_ATOM_FLOOR} excluded")
    return CoefficientEstimate(float(tv.max()) if tv.size else 0.0, t.C.tail_mass + excluded, flags)


def _best_union(rho: np.ndarray, chunk: int = 1 << 14) -> float:
    """``max_U max_V |sum_{U x V} rho|`` by enumerating subsets of the rows."""
    s = rho.shape[0]
    best = 0.0
    bit = 1 << np.arange(s, dtype=np.int64)
    for start in range(1, 1 << s, chunk):
        masks = np.arange(start, min(start + chunk, 1 << s), dtype=np.int64)
        member = ((masks[:, None] & bit[None, :]) != 0).astype(float)
        col = member @ rho
        pos = np.where(col > 0, col, 0.0).sum(axis=1)
        neg = np.where(col < 0, -col, 0.0).sum(axis=1)
        best = max(best, float(np.maximum(pos, neg).max()))
    return best


def alpha_coefficient(model, n: int, m: int, delta: int, mode: str = "auto", policy=None, cap: int = ALPHA_EXACT_CAP) -> AlphaEstimate:
    """Strong-mixing coefficient, exactly by union enumeration or as ``[max |rho|, psi]``.

    ``mode`` is ``"exact"``, ``"bounds"`` or ``"auto"`` (exact when the
    smaller side has at most ``cap`` atoms).
    """
    if mode not in ("auto", "exact", "bounds"):
        raise ValidationError(f"alpha mode must be auto, exact or bounds, got {mode!r}")
    if _independent(model, delta):
        return AlphaEstimate(0.0, 0.0, mode != "bounds")
    t = pair_table(model, n, m, delta, policy)
    rho = t.rho
    if rho.shape[0] > rho.shape[1]:
        rho = rho.T
    flags = _tail_flags(t)
    small = rho.shape[0]
    if mode == "exact" and small > cap:
        raise EnumerationCapError(f"exact alpha needs 2^{small} unions, cap is 2^{cap}")
    if mode == "exact" or (mode == "auto" and small <= cap):
        v = _best_union(rho)
        return AlphaEstimate(v, v, True, flags)
    lo = float(np.abs(rho).max()) if rho.size else 0.0
    hi = 0.5 * math.fsum(np.abs(rho).ravel())
    return AlphaEstimate(lo, hi, False, flags)


def psi_subset_sup(model, n: int, m: int, delta: int, policy=None, cap: int = SUBSET_ORACLE_CAP) -> float:
    """Brute-force ``sup_S |sum_{(B,C) in S} rho(B, C)|`` over every set of pairs (test oracle)."""
    rho = pair_table(model, n, m, delta, policy).rho.ravel()
    if rho.size > cap:
        raise EnumerationCapError(f"{rho.size} pairs exceed the subset-oracle cap {cap}")
    return _best_union(rho[:, None]) if rho.size else 0.0


# ---------------------------------------------------------------------------
# decay laws


@dataclass
class DecayFit:
    kind: str  # "exponential" | "polynomial" | "independent" | "none"
    p: float | None = None
    theta: float | None = None
    r2: float = 0.0

    def to_dict(self):
        return asdict(self)


def fit_decay(gaps: Sequence[float], values: Sequence[float]) -> DecayFit:
    """Fit ``v ~ C theta^gap`` and ``v ~ C gap^-p``; keep the one with higher r^2."""
    g = np.asarray(gaps, dtype=float)
    v = np.asarray(values, dtype=float)
    if g.size != v.size or g.size == 0:
        raise ValidationError("gaps and values must be nonempty and of equal length")
    if np.all(np.abs(v) <= INDEPENDENT_TOL):
        return DecayFit("independent", r2=1.0)
    if np.any(np.diff(v) > MONOTONE_TOL):
        return DecayFit("none")
    pos = v > INDEPENDENT_TOL
    candidates = []
    if pos.sum() >= 2:
        _, b, r2 = linear_fit(g[pos], np.log(v[pos]))
        candidates.append((r2, DecayFit("exponential", theta=math.exp(b), r2=r2)))
    ppos = pos & (g >= 1)
    if ppos.sum() >= 2:
        _, b, r2 = linear_fit(np.log(g[ppos]), np.log(v[ppos]))
        candidates.append((r2, DecayFit("polynomial", p=-b, r2=r2)))
    if not candidates:
        return DecayFit("none")
    return max(candidates, key=lambda c: c[0])[1]


@dataclass
class MixingProfile:
    gaps: list
    psi: list
    phi: list
    alpha_lo: list
    alpha_hi: list
    eval_depths: list
    fit: DecayFit
    monotone: bool = True
    flags: list = field(default_factory=list)

    def csv_rows(self) -> list:
        return [list(r) for r in zip(self.gaps, self.psi, self.phi, self.alpha_lo, self.alpha_hi)]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["fit"] = DecayFit(**d["fit"])
        d["eval_depths"] = [list(x) for x in d["eval_depths"]]
        return cls(**d)


def _profile_point(model, delta, depths, policy):
    psi = phi = lo = hi = 0.0
    flags = []
    for n, m in depths:
        ps = psi_coefficient(model, n, m, delta, policy)
        ph = phi_coefficient(model, n, m, delta, policy)
        al = alpha_coefficient(model, n, m, delta, policy=policy)
        psi, phi = max(psi, ps.value), max(phi, ph.value)
        lo, hi = max(lo, al.lo), max(hi, al.hi)
        flags += ps.flags + ph.flags
    return psi, phi, lo, hi, sorted(set(flags))


def mixing_profile(model, gaps: Sequence[int], depths=DEFAULT_DEPTHS, policy=None, workers: int | None = 1) -> MixingProfile:
    """Coefficients over a gap grid, each a sup over the ``(n, m)`` depth grid.

    The sup over a finite depth grid is a lower bound on the coefficient over
    all block lengths (exact for Markov chains, whose correlations only see
    the boundary symbols).
    """
    gaps = sorted(int(d) for d in gaps)
    if not gaps:
        raise ValidationError("gap grid is empty")
    if gaps[0] < 0:
        raise ValidationError("gaps must be >= 0")
    depths = [tuple(d) for d in depths]
    pts = parallel_map(lambda d: _profile_point(model, d, depths, policy), gaps, workers)
    psi, phi, lo, hi = ([p[i] for p in pts] for i in range(4))
    flags = sorted({f for p in pts for f in p[4]})
    fit = fit_decay(gaps, psi)
    monotone = fit.kind != "none"
    if not monotone:
        flags.append("psi profile is not non-increasing in the gap")
    return MixingProfile(gaps, psi, phi, lo, hi, [list(d) for d in depths], fit, monotone, flags)


def max_cylinder_decay(model, n_grid: Sequence[int], mixing: str = "exponential", power: float | None = None) -> dict:
    """Largest atom of ``A^n`` across ``n`` with a fitted decay law and a verdict.

    Under exponential mixing the atoms must shrink at least like
    ``theta^sqrt(n)``, so ``-log max / sqrt(n)`` should be bounded below and not
    drift to zero; under polynomial mixing with power ``p`` the analogous
    quantity is ``-log max / (p log n)``.
    """
    ns = sorted(int(n) for n in n_grid)
    if len(ns) < 2 or ns[0] < 1:
        raise ValidationError("n_grid needs at least two depths >= 1")
    mx = [max_atom(model, n) for n in ns]
    fit = fit_decay(ns, mx)
    logs = -np.log(mx)
    if mixing == "exponential":
        scale = np.sqrt(ns)
    elif mixing == "polynomial":
        if not power or power <= 0:
            raise ValidationError("polynomial mixing needs a positive power")
        scale = power * np.log(np.maximum(ns, 2))
    else:
        raise ValidationError(f"unknown mixing class {mixing!r}")
    ratio = logs / scale
    # at least as fast as the bound: ratio stays away from 0 and does not decline
    consistent = bool(ratio[-1] > 0 and ratio[-1] >= ratio[len(ratio) // 2] - 1e-12)
    return {
        "n_grid": ns,
        "max_measures": mx,
        "fit": fit.to_dict(),
        "decay_ratio": ratio.tolist(),
        "verdict": "consistent" if consistent else "inconsistent",
    }
