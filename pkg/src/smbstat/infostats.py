"""Moments of the information function ``I_n = -log mu(A_n(x))``.

All quantities are exact sums over the atoms of the join ``A^n`` (or over
pairs of atoms of ``B = A^n`` and ``C = T^{-delta-n} A^m``), with explicit
accounting for whatever mass a truncated enumeration leaves out.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from ._fit import aitken, growth_exponent, loglog_slope
from .errors import EnumerationCapError, InfiniteInformationError, ValidationError
from .model import (
    GeometricModel,
    MeasureModel,
    TruncationPolicy,
    enumerate_cylinders,
    log_cylinder_measure,
)

DEFAULT_ORDERS = (2.0, 3.0, 4.0, 4.5)
RELIABLE_MASS = 1.0 - 1e-6
PAIR_CAP = 4_000_000
PAIRWISE_CAP = 4096


def information(model: MeasureModel, word: Sequence[int]) -> float:
    """``-log mu([word])`` in nats."""
    lm = log_cylinder_measure(model, word)
    if lm == -math.inf:
        raise InfiniteInformationError(f"word {tuple(word)} has zero measure")
    return -lm


@dataclass
class AtomTable:
    """Atoms of ``A^n`` as flat arrays (symbols 0-based)."""

    n: int
    measure: np.ndarray
    first: np.ndarray
    last: np.ndarray
    tail_mass: float
    complete: bool
    flags: list = field(default_factory=list)

    @property
    def retained_mass(self) -> float:
        return math.fsum(self.measure)

    def __len__(self):
        return self.measure.size


def atom_table(model: MeasureModel, n: int, policy: TruncationPolicy | None = None) -> AtomTable:
    """Atoms of ``A^n``: vectorised full enumeration when the alphabet is finite and
    the atom count fits the cap, best-first enumeration otherwise."""
    if n < 1:
        raise ValidationError(f"depth n must be >= 1, got {n}")
    policy = policy or TruncationPolicy()
    kern = model.finite_kernel()
    if kern is not None:
        init, T = kern
        idx = np.flatnonzero(init > 0)
        m, first, last = init[idx], idx, idx
        ok = True
        for _ in range(n - 1):
            ext = m[:, None] * T[last]
            keep = ext > 0
            if keep.sum() > policy.max_atoms:
                ok = False
                break
            rows, cols = np.nonzero(keep)
            m, first, last = ext[rows, cols], first[rows], cols
        if ok:
            return AtomTable(n, m, first, last, 0.0, True)
    en = enumerate_cylinders(model, n, policy)
    words = [c.word for c in en.cylinders]
    return AtomTable(
        n,
        np.array(en.masses),
        np.array([w[0] - 1 for w in words], dtype=np.int64),
        np.array([w[-1] - 1 for w in words], dtype=np.int64),
        en.tail_mass,
        en.complete,
        list(en.flags),
    )


def _step_norms(model: MeasureModel, r: float) -> tuple:
    """L^r norms of ``-log mu([x_1])`` and of one transition term ``-log P(x_2|x_1)``."""
    if isinstance(model, GeometricModel):
        a, b = -math.log1p(-model.q), -math.log(model.q)
        total, k = 0.0, 0
        while True:
            w = (1.0 - model.q) * model.q**k
            term = w * (a + b * k) ** r
            total += term
            k += 1
            if k > 10 and term < 1e-18 * max(total, 1e-300):
                break
        norm = total ** (1.0 / r)
        return norm, norm
    init, T = model.finite_kernel()
    with np.errstate(divide="ignore"):
        li = np.where(init > 0, -np.log(np.where(init > 0, init, 1.0)), 0.0)
        lt = np.where(T > 0, -np.log(np.where(T > 0, T, 1.0)), 0.0)
    first = float((init * li**r).sum()) ** (1.0 / r)
    step = float((init[:, None] * T * lt**r).sum()) ** (1.0 / r)
    return first, step


def tail_moment_bound(model: MeasureModel, n: int, w: float, tail_mass: float) -> float:
    """Upper bound on ``sum_{unseen A} mu(A) I(A)^w``.

    Cauchy-Schwarz gives ``E[I^w; tail] <= ||I_n||_{2w}^w sqrt(tail)`` and
    Minkowski bounds ``||I_n||_{2w}`` by the sum of per-step norms.
    """
    if tail_mass <= 0.0:
        return 0.0
    first, step = _step_norms(model, 2.0 * w)
    return (first + (n - 1) * step) ** w * math.sqrt(tail_mass)


@dataclass
class MomentReport:
    n: int
    H_n: float
    orders: list
    K_w: list
    sigma2_n: float
    M3: float
    M4: float
    retained_mass: float
    tail_mass: float
    tail_bound_per_moment: list
    reliable: bool
    flags: list = field(default_factory=list)

    def K(self, w: float) -> float:
        return self.K_w[self.orders.index(float(w))]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _moments_from_atoms(table: AtomTable, orders):
    m = table.measure
    I = -np.log(m)
    H = math.fsum(m * I)
    J = I - H
    J2 = J * J
    return (
        H,
        [math.fsum(m * I**w) for w in orders],
        math.fsum(m * J2),
        math.fsum(m * np.abs(J) * J2),
        math.fsum(m * J2 * J2),
    )


def moment_report(
    model: MeasureModel,
    n: int,
    orders: Sequence[float] = DEFAULT_ORDERS,
    policy: TruncationPolicy | None = None,
    reliable_mass: float = RELIABLE_MASS,
) -> MomentReport:
    """``H_n``, ``K_w(A^n)``, ``sigma_n^2`` and the central moments ``M_3 = E|J_n|^3``, ``M_4``."""
    orders = [float(w) for w in orders]
    for w in orders:
        if w <= 0:
            raise ValidationError(f"moment orders must be positive, got {w}")
    table = atom_table(model, n, policy)
    H, K, s2, M3, M4 = _moments_from_atoms(table, orders)
    retained = table.retained_mass
    flags = list(table.flags)
    reliable = retained >= reliable_mass
    if not reliable:
        flags.append(f"retained mass {retained:.6g} below floor {reliable_mass}")
    tails = [tail_moment_bound(model, n, w, table.tail_mass) for w in orders]
    return MomentReport(n, H, orders, K, s2, M3, M4, retained, table.tail_mass, tails, reliable, flags)


# ---------------------------------------------------------------------------
# pairs B in A^n, C in T^{-delta-n} A^m


@dataclass
class PairTable:
    B: AtomTable
    C: AtomTable
    delta: int
    joint: np.ndarray  # mu(B & C), shape (|B|, |C|)

    @property
    def product(self) -> np.ndarray:
        return np.outer(self.B.measure, self.C.measure)

    @property
    def rho(self) -> np.ndarray:
        return self.joint - self.product

    @property
    def missing_mass(self) -> float:
        return self.B.tail_mass + self.C.tail_mass


def pair_table(model, n: int, m: int, delta: int, policy=None, cap: int = PAIR_CAP) -> PairTable:
    if delta < 0:
        raise ValidationError(f"gap must be >= 0, got {delta}")
    B = atom_table(model, n, policy)
    C = B if m == n else atom_table(model, m, policy)
    if len(B) * len(C) > cap:
        raise EnumerationCapError(f"{len(B)} x {len(C)} atom pairs exceed the cap {cap}")
    joint = np.outer(B.measure, C.measure)
    G = model.gap_matrix(delta)
    if G is not None:
        joint *= G[np.ix_(B.last, C.first)]
    return PairTable(B, C, delta, joint)


def _xlog_power(mass, ratio, w):
    """``sum mass * |log ratio|^w`` over entries with positive mass."""
    pos = mass > 0
    return math.fsum(mass[pos] * np.abs(np.log(ratio[pos])) ** w)


@dataclass
class ConditionalReport:
    n: int
    m: int
    delta: int
    orders: list
    K_cond: list  # K_w(C|B)
    K_C: list  # K_w(C)
    K_B: list
    K_join: list  # K_w(B v C)
    H_B: float
    H_C: float
    H_join: float
    H_cond: float
    sigma_B: float
    sigma_C: float
    sigma_join: float
    sigma_cond: float
    missing_mass: float

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _sigma(mass, info):
    pos = mass > 0
    mass, info = mass[pos], info[pos]
    H = math.fsum(mass * info)
    return H, math.sqrt(max(math.fsum(mass * (info - H) ** 2), 0.0))


def conditional_moments(model, n, m, delta, orders=(1.0, 2.0), policy=None, table: PairTable | None = None):
    """Conditional and joint moments for ``B = A^n`` and ``C = T^{-delta-n} A^m``."""
    orders = [float(w) for w in orders]
    t = table or pair_table(model, n, m, delta, policy)
    J = t.joint
    muB = np.broadcast_to(t.B.measure[:, None], J.shape)
    muC = t.C.measure
    ones = np.ones_like(J)
    with np.errstate(divide="ignore"):
        info_join = np.where(J > 0, -np.log(np.where(J > 0, J, 1.0)), 0.0)
        info_cond = np.where(J > 0, np.log(muB) + info_join, 0.0)
    H_B, s_B = _sigma(t.B.measure, -np.log(t.B.measure))
    H_C, s_C = _sigma(muC, -np.log(muC))
    H_join, s_join = _sigma(J.ravel(), info_join.ravel())
    H_cond, s_cond = _sigma(J.ravel(), info_cond.ravel())
    return ConditionalReport(
        n=n,
        m=m,
        delta=delta,
        orders=orders,
        K_cond=[_xlog_power(J, J / muB, w) for w in orders],
        K_C=[_xlog_power(muC, muC, w) for w in orders],
        K_B=[_xlog_power(t.B.measure, t.B.measure, w) for w in orders],
        K_join=[_xlog_power(J, np.where(J > 0, J, ones), w) for w in orders],
        H_B=H_B,
        H_C=H_C,
        H_join=H_join,
        H_cond=H_cond,
        sigma_B=s_B,
        sigma_C=s_C,
        sigma_join=s_join,
        sigma_cond=s_cond,
        missing_mass=t.missing_mass,
    )


def log_ratio_moment(model, n, m, delta, a, policy=None) -> float:
    """``sum mu(B & C) |log(1 + rho(B,C) / (mu(B) mu(C)))|^a``."""
    if a <= 0:
        raise ValidationError(f"exponent a must be positive, got {a}")
    t = pair_table(model, n, m, delta, policy)
    J = t.joint
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = J / t.product
    return _xlog_power(J, np.where(J > 0, ratio, 1.0), a)


def entropy_additivity_defect(model, n, m, delta, policy=None) -> float:
    """``H(B v C) - H(B) - H(C)``; zero under independence."""
    r = conditional_moments(model, n, m, delta, orders=(1.0,), policy=policy)
    return r.H_join - r.H_B - r.H_C


def variance_identity_check(model, n, cap: int = PAIRWISE_CAP, policy=None) -> dict:
    """``K_2 - H^2`` against ``1/2 sum_{A,B} mu(A) mu(B) log^2(mu(A)/mu(B))`` on ``A^n``."""
    table = atom_table(model, n, policy)
    if len(table) > cap:
        raise EnumerationCapError(
            f"{len(table)} atoms exceed the pairwise cap {cap}; use the Monte Carlo diagnostics instead"
        )
    mu = table.measure
    lm = np.log(mu)
    H = -math.fsum(mu * lm)
    K2 = math.fsum(mu * lm * lm)
    d = lm[:, None] - lm[None, :]
    rhs = 0.5 * math.fsum((np.outer(mu, mu) * d * d).ravel())
    return {"n": n, "lhs": K2 - H * H, "rhs": rhs, "atoms": len(table)}


# ---------------------------------------------------------------------------
# refinement and the subadditivity-type inequalities


def max_atom(model, n) -> float:
    en = enumerate_cylinders(model, n, TruncationPolicy(tail_mass=0.0, max_atoms=1))
    return en.cylinders[0].measure


def refinement_depth(model, w: float, k_max: int = 256) -> int:
    """Smallest ``k`` such that every atom of ``A^k`` has measure ``<= e^{-w}``."""
    bound = math.exp(-w)
    for k in range(1, k_max + 1):
        if max_atom(model, k) <= bound:
            return k
    raise ValidationError(f"no refinement A^k with k <= {k_max} has all atoms below e^-{w}")


@dataclass
class LemmaCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-12 * max(1.0, abs(self.rhs))


def lemma_checks(model, n, m, delta, w, policy=None) -> list:
    """Evaluate the conditional-moment, subadditivity and variance-join inequalities.

    ``n``, ``m`` and ``delta`` are in original symbols; the caller is
    responsible for choosing ``m`` large enough that atoms of ``A^m`` are
    below ``e^{-w}`` (see :func:`refinement_depth`).
    """
    r = conditional_moments(model, n, m, delta, orders=(w,), policy=policy)
    Kc, KC, KB, Kj = r.K_cond[0], r.K_C[0], r.K_B[0], r.K_join[0]
    iw = 1.0 / w
    return [
        LemmaCheck("conditional_moment", Kc, KC),
        LemmaCheck("minkowski_conditional", Kj**iw, Kc**iw + KB**iw),
        LemmaCheck("subadditivity", Kj**iw, KC**iw + KB**iw),
        LemmaCheck("variance_join", r.sigma_join, r.sigma_cond + r.sigma_B),
    ]


# ---------------------------------------------------------------------------
# rates


@dataclass
class EntropyRateEstimate:
    h_hat: float
    gamma_fit: float | None
    c_fit: float
    m_grid: list
    ratios: list
    confident: bool
    flags: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _fit_power_offset(ms, ys):
    """Least-squares fit of ``y = h + c m^-gamma``, profiling out ``(h, c)``."""

    def solve(gamma):
        A = np.column_stack([np.ones_like(ms), ms**-gamma])
        coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
        return coef, float(((A @ coef - ys) ** 2).sum())

    res = minimize_scalar(
        lambda lg: solve(math.exp(lg))[1],
        bounds=(math.log(0.02), math.log(20.0)),
        method="bounded",
        options={"xatol": 1e-12},
    )
    gamma = math.exp(res.x)
    (h, c), _ = solve(gamma)
    return float(h), float(c), gamma


def entropy_rate_estimate(model, m_grid: Sequence[int], policy=None) -> EntropyRateEstimate:
    """Extrapolate ``H_m / m -> h`` by fitting ``H_m / m = h + c m^-gamma``."""
    ms = np.asarray(sorted(m_grid), dtype=float)
    if ms.size < 3 or np.any(np.diff(ms) <= 0):
        raise ValidationError("m_grid needs at least 3 strictly increasing points")
    ys = np.array([moment_report(model, int(mm), orders=(1.0,), policy=policy).H_n / mm for mm in ms])
    spread = float(ys.max() - ys.min())
    if spread <= 1e-12 * max(1.0, abs(float(ys.mean()))):
        return EntropyRateEstimate(float(ys.mean()), None, 0.0, ms.astype(int).tolist(), ys.tolist(), True)
    h, c, gamma = _fit_power_offset(ms, ys)
    resid = ys - h
    steps = np.diff(resid)
    monotone = bool(np.all(steps <= 0) or np.all(steps >= 0))
    flags = [] if monotone else ["non-monotone residuals; fit is low-confidence"]
    return EntropyRateEstimate(h, gamma, c, ms.astype(int).tolist(), ys.tolist(), monotone, flags)


def variance_rate_estimate(model, n_max: int, policy=None) -> dict:
    """Extrapolate ``sigma_n^2 / n`` from exact enumeration for ``n <= n_max``.

    The first Richardson step removes the ``1/n`` term (``n a_n - (n-1) a_{n-1}``,
    i.e. the increment of ``sigma_n^2``); Aitken's delta-squared then removes
    the geometric remainder left by exponentially decaying correlations.
    """
    if n_max < 4:
        raise ValidationError("need n_max >= 4")
    s2 = [moment_report(model, n, orders=(2.0,), policy=policy).sigma2_n for n in range(1, n_max + 1)]
    inc = np.diff(s2)
    return {
        "n_max": n_max,
        "sigma2_over_n": s2[-1] / n_max,
        "richardson_1": float(inc[-1]),
        "sigma2_hat": aitken(inc),
        "sigma2_n": s2,
    }


def moment_growth(model, n_grid: Sequence[int], policy=None) -> dict:
    """Fitted growth exponents of ``M_3`` and ``M_4`` across an ``n`` grid."""
    ns = sorted(int(n) for n in n_grid)
    reps = [moment_report(model, n, orders=(2.0,), policy=policy) for n in ns]
    M3 = [r.M3 for r in reps]
    M4 = [r.M4 for r in reps]
    return {
        "n_grid": ns,
        "M3": M3,
        "M4": M4,
        "exponent_M3": growth_exponent(ns, M3),
        "exponent_M4": growth_exponent(ns, M4),
        "loglog_M3": loglog_slope(ns, M3),
        "loglog_M4": loglog_slope(ns, M4),
    }


def moments_csv_rows(reports: Sequence[MomentReport]) -> list:
    """Rows ``(n, H_n, K2, K3, K4, sigma2, M3, M4, retained_mass)``."""
    rows = []
    for r in reports:
        get = lambda w: r.K(w) if float(w) in r.orders else float("nan")  # noqa: E731
        rows.append([r.n, r.H_n, get(2), get(3), get(4), r.sigma2_n, r.M3, r.M4, r.retained_mass])
    return rows
