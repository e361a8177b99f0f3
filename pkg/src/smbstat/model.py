"""Stationary symbolic measures over countable alphabets.

Symbols are 1-based integers. A word is a tuple of symbols; the cylinder of a
word is the set of sequences starting with it. Three concrete models exist:

* :class:`BernoulliModel` -- iid with an explicit finite weight list,
* :class:`GeometricModel` -- iid with weights ``(1-q) q**(i-1)`` on all of N,
* :class:`MarkovModel` -- a stationary Markov chain ``(p, P)`` on a finite
  (possibly truncated) alphabet.

Empirical models produced by :func:`ingest_stream` are Bernoulli or Markov
models carrying a ``provenance`` record.
"""

from __future__ import annotations

import heapq
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import (
    MeasureUnderflowError,
    NonErgodicError,
    NonStationaryError,
    PeriodicChainError,
    ValidationError,
)

WEIGHT_TOL = 1e-9
STATIONARY_TOL = 1e-9
MAX_STATIONARY_ITER = 1_000_000
# increments held in memory at once when streaming trajectories
CHUNK_ELEMENTS = 1 << 21

Word = tuple


class NonStationaryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TruncationPolicy:
    """Stop enumerating once retained mass reaches ``1 - tail_mass`` or after ``max_atoms``."""

    tail_mass: float = 1e-12
    max_atoms: int = 2_000_000

    def __post_init__(self):
        if not 0.0 <= self.tail_mass < 1.0:
            raise ValidationError(f"tail_mass must lie in [0, 1), got {self.tail_mass}")
        if self.max_atoms < 1:
            raise ValidationError(f"max_atoms must be positive, got {self.max_atoms}")


@dataclass(frozen=True)
class Cylinder:
    word: tuple
    measure: float

    @property
    def length(self) -> int:
        return len(self.word)


@dataclass
class Enumeration:
    cylinders: list
    retained_mass: float
    tail_mass: float
    complete: bool
    flags: list = field(default_factory=list)

    @property
    def masses(self) -> list:
        return [c.measure for c in self.cylinders]


# ---------------------------------------------------------------------------
# models


class MeasureModel:
    """Common interface. Subclasses fill in the kernel accessors."""

    kind: str = "abstract"
    provenance: dict | None = None

    # number of symbols, or None for a countably infinite alphabet
    @property
    def alphabet_size(self) -> int | None:
        raise NotImplementedError

    @property
    def is_iid(self) -> bool:
        return False

    def initial_prob(self, a: int) -> float:
        raise NotImplementedError

    def transition_prob(self, a: int, b: int) -> float:
        raise NotImplementedError

    def ranked_successor(self, prev: int | None, rank: int):
        """The ``rank``-th heaviest successor of ``prev`` (``None`` = first symbol).

        Returns ``(symbol, probability)`` or ``None`` once the positive support
        is exhausted. Ties are ordered by symbol.
        """
        raise NotImplementedError

    def finite_kernel(self):
        """``(initial, transition)`` arrays over symbols 1..K, or None if countable."""
        return None

    def gap_matrix(self, delta: int):
        """Ratio ``mu(B & C) / (mu(B) mu(C))`` as a function of (last of B, first of C).

        ``None`` means the ratio is identically 1 (independence).
        """
        return None

    def second_eigenvalue_modulus(self) -> float:
        return 0.0

    def to_dict(self) -> dict:
        raise NotImplementedError

    # sampling ---------------------------------------------------------------

    def sample_paths(self, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
        """Integer array ``(size, n)`` of 1-based symbols."""
        raise NotImplementedError

    def sample_information(self, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
        """``size`` independent draws of ``I_n``."""
        inc = self.information_increments(size, rng)
        out = np.zeros(size)
        done = 0
        state = None
        max_len = max(1, CHUNK_ELEMENTS // max(size, 1))
        while done < n:
            length = min(n - done, max_len)
            block, state = inc(length, state)
            out += block.sum(axis=1)
            done += length
        return out

    def information_increments(self, size: int, rng: np.random.Generator):
        """Return ``step(length, state) -> (increments (size, length), state)``.

        Streaming ``size`` independent trajectories: the first increment is
        ``-log mu([x_1])``, the following ones ``-log P(x_k | x_{k-1})``.
        """
        raise NotImplementedError


def _check_prob_vector(values, where: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"{where}: expected a nonempty list of numbers")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{where}: non-finite entry")
    bad = np.flatnonzero(arr < 0)
    if bad.size:
        raise ValidationError(f"{where}[{bad[0]}]: negative weight {arr[bad[0]]}")
    total = math.fsum(arr)
    if abs(total - 1.0) > WEIGHT_TOL:
        raise ValidationError(f"{where}: weights sum to {total!r}, expected 1 within {WEIGHT_TOL}")
    return arr


class BernoulliModel(MeasureModel):
    kind = "bernoulli"

    def __init__(self, weights: Sequence[float], provenance: dict | None = None):
        self.weights = _check_prob_vector(weights, "$.weights")
        self.provenance = provenance
        order = sorted(range(self.weights.size), key=lambda i: (-self.weights[i], i))
        self._ranked = [(i + 1, float(self.weights[i])) for i in order if self.weights[i] > 0]
        self._cum = np.cumsum(self.weights)
        self._cum[-1] = 1.0
        with np.errstate(divide="ignore"):
            self._neglog = -np.log(self.weights)

    def __repr__(self):
        return f"BernoulliModel(weights={self.weights.tolist()})"

    @property
    def alphabet_size(self):
        return int(self.weights.size)

    @property
    def is_iid(self):
        return True

    def initial_prob(self, a):
        return float(self.weights[a - 1]) if 1 <= a <= self.weights.size else 0.0

    def transition_prob(self, a, b):
        return self.initial_prob(b)

    def ranked_successor(self, prev, rank):
        return self._ranked[rank] if rank < len(self._ranked) else None

    def finite_kernel(self):
        K = self.weights.size
        return self.weights.copy(), np.tile(self.weights, (K, 1))

    def to_dict(self):
        return {"type": "bernoulli", "weights": self.weights.tolist()}

    def _draw(self, shape, rng):
        u = rng.random(shape)
        return np.searchsorted(self._cum, u, side="right")

    def sample_paths(self, n, size, rng):
        return self._draw((size, n), rng) + 1

    def sample_information(self, n, size, rng):
        # only the symbol counts matter for I_n of an iid word
        counts = rng.multinomial(n, self.weights, size=size)
        pos = self.weights > 0
        return counts[:, pos] @ self._neglog[pos]

    def information_increments(self, size, rng):
        def step(length, state):
            return self._neglog[self._draw((size, length), rng)], state

        return step


class GeometricModel(MeasureModel):
    """iid model on N with weights ``(1-q) q**(i-1)``."""

    kind = "geometric"

    def __init__(self, q: float):
        q = float(q)
        if not 0.0 < q < 1.0:
            raise ValidationError(f"$.q: ratio must lie in (0, 1), got {q}")
        self.q = q
        self.provenance = None

    def __repr__(self):
        return f"GeometricModel(q={self.q})"

    @property
    def alphabet_size(self):
        return None

    @property
    def is_iid(self):
        return True

    def weight(self, i: int) -> float:
        return (1.0 - self.q) * self.q ** (i - 1) if i >= 1 else 0.0

    def initial_prob(self, a):
        return self.weight(a)

    def transition_prob(self, a, b):
        return self.weight(b)

    def ranked_successor(self, prev, rank):
        w = self.weight(rank + 1)
        return (rank + 1, w) if w > 0 else None

    def to_dict(self):
        return {"type": "geometric", "q": self.q}

    def sample_paths(self, n, size, rng):
        return rng.geometric(1.0 - self.q, size=(size, n))

    def sample_information(self, n, size, rng):
        # sum of n geometric symbols minus n is negative binomial
        failures = rng.negative_binomial(n, 1.0 - self.q, size=size)
        return -n * math.log1p(-self.q) - failures * math.log(self.q)

    def information_increments(self, size, rng):
        a, b = -math.log1p(-self.q), -math.log(self.q)

        def step(length, state):
            return a + b * (rng.geometric(1.0 - self.q, size=(size, length)) - 1), state

        return step


class MarkovModel(MeasureModel):
    """Stationary Markov measure ``mu(x) = p[x1] P[x1,x2] ... P[x_{n-1},x_n]``.

    If ``p`` is omitted it is solved from ``P``; if given it must satisfy
    ``pP = p`` within ``STATIONARY_TOL``.
    """

    kind = "markov"

    def __init__(self, P, p=None, provenance: dict | None = None):
        self.P = _check_stochastic(P)
        if p is None:
            self.p = stationary_distribution(self.P)
        else:
            self.p = _check_prob_vector(p, "$.p")
            if self.p.size != self.P.shape[0]:
                raise ValidationError(f"$.p: length {self.p.size} does not match P of size {self.P.shape[0]}")
            resid = float(np.abs(self.p @ self.P - self.p).sum())
            if resid > STATIONARY_TOL:
                raise NonStationaryError(f"$.p: not stationary for P (|pP - p|_1 = {resid:.3g})")
        self.provenance = provenance
        K = self.P.shape[0]
        self._ranked_init = _ranked(self.p)
        self._ranked_rows = [_ranked(self.P[a]) for a in range(K)]
        self._cum = np.cumsum(self.P, axis=1)
        self._cum[:, -1] = 1.0
        self._cum_cols = np.ascontiguousarray(self._cum.T)
        self._cum_init = np.cumsum(self.p)
        self._cum_init[-1] = 1.0
        with np.errstate(divide="ignore"):
            self._neglogP = -np.log(self.P)
            self._neglogp = -np.log(self.p)
        self._lambda2 = None

    def __repr__(self):
        return f"MarkovModel(P={self.P.tolist()}, p={self.p.tolist()})"

    @property
    def alphabet_size(self):
        return int(self.P.shape[0])

    @property
    def is_iid(self):
        return bool(np.allclose(self.P, self.p[None, :], rtol=0, atol=1e-15))

    def initial_prob(self, a):
        return float(self.p[a - 1]) if 1 <= a <= self.p.size else 0.0

    def transition_prob(self, a, b):
        K = self.p.size
        return float(self.P[a - 1, b - 1]) if 1 <= a <= K and 1 <= b <= K else 0.0

    def ranked_successor(self, prev, rank):
        ranked = self._ranked_init if prev is None else self._ranked_rows[prev - 1]
        return ranked[rank] if rank < len(ranked) else None

    def finite_kernel(self):
        return self.p.copy(), self.P.copy()

    def gap_matrix(self, delta):
        Q = np.linalg.matrix_power(self.P, delta + 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            G = np.where(self.p[None, :] > 0, Q / self.p[None, :], 0.0)
        return G

    def second_eigenvalue_modulus(self):
        if self._lambda2 is None:
            from .oracle import second_eigenvalue_modulus

            self._lambda2 = second_eigenvalue_modulus(self.p, self.P)
        return self._lambda2

    def to_dict(self):
        return {"type": "markov", "p": self.p.tolist(), "P": self.P.tolist()}

    def _next(self, states, u):
        # inverse-CDF step; K - 1 gathers beat a (size, K) comparison for small K
        nxt = np.zeros(states.size, dtype=np.int64)
        for j in range(self._cum.shape[1] - 1):
            nxt += u >= self._cum_cols[j][states]
        return nxt

    def _step(self, states, rng):
        return self._next(states, rng.random(states.size))

    def sample_information(self, n, size, rng):
        states = np.searchsorted(self._cum_init, rng.random(size), side="right")
        out = self._neglogp[states].copy()
        flat = self._neglogP.ravel()
        K = self.P.shape[0]
        max_len = max(1, CHUNK_ELEMENTS // max(size, 1))
        done = 1
        while done < n:
            length = min(n - done, max_len)
            for u in rng.random((length, size)):
                nxt = self._next(states, u)
                out += flat[states * K + nxt]
                states = nxt
            done += length
        return out

    def sample_paths(self, n, size, rng):
        out = np.empty((size, n), dtype=np.int64)
        states = np.searchsorted(self._cum_init, rng.random(size), side="right")
        out[:, 0] = states
        for k in range(1, n):
            states = self._step(states, rng)
            out[:, k] = states
        return out + 1

    def information_increments(self, size, rng):
        def step(length, states):
            inc = np.empty((size, length))
            start = 0
            if states is None:
                states = np.searchsorted(self._cum_init, rng.random(size), side="right")
                inc[:, 0] = self._neglogp[states]
                start = 1
            for k in range(start, length):
                nxt = self._step(states, rng)
                inc[:, k] = self._neglogP[states, nxt]
                states = nxt
            return inc, states

        return step


def _ranked(row) -> list:
    order = sorted(range(len(row)), key=lambda i: (-row[i], i))
    return [(i + 1, float(row[i])) for i in order if row[i] > 0]


def _check_stochastic(P) -> np.ndarray:
    arr = np.asarray(P, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise ValidationError("$.P: expected a nonempty square matrix")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("$.P: non-finite entry")
    neg = np.argwhere(arr < 0)
    if neg.size:
        i, j = neg[0]
        raise ValidationError(f"$.P[{i}][{j}]: negative entry {arr[i, j]}")
    for i, row in enumerate(arr):
        s = math.fsum(row)
        if abs(s - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"$.P[{i}]: row sums to {s!r}, expected 1 within {WEIGHT_TOL}")
    return arr


# ---------------------------------------------------------------------------
# operations


def cylinder_measure(model: MeasureModel, word: Sequence[int]) -> float:
    """Product-form measure of the cylinder of ``word``.

    Returns 0.0 when some symbol or transition lies outside the support.
    Raises :class:`MeasureUnderflowError` when every factor is positive but
    the product underflows.
    """
    word = tuple(word)
    if not word:
        return 1.0
    m = model.initial_prob(word[0])
    if m == 0.0:
        return 0.0
    for a, b in zip(word, word[1:]):
        t = model.transition_prob(a, b)
        if t == 0.0:
            return 0.0
        m *= t
    if m == 0.0:
        raise MeasureUnderflowError(f"measure of a length-{len(word)} word underflowed; use log_cylinder_measure")
    return m


def log_cylinder_measure(model: MeasureModel, word: Sequence[int]) -> float:
    """``log mu([word])``; ``-inf`` outside the support."""
    word = tuple(word)
    if not word:
        return 0.0
    first = model.initial_prob(word[0])
    if first == 0.0:
        return -math.inf
    total = math.log(first)
    for a, b in zip(word, word[1:]):
        t = model.transition_prob(a, b)
        if t == 0.0:
            return -math.inf
        total += math.log(t)
    return total


def enumerate_cylinders(model: MeasureModel, n: int, policy: TruncationPolicy | None = None) -> Enumeration:
    """Emit the n-cylinders in non-increasing measure order by best-first search.

    The search tree is the cylinder tree; a node's key is its measure, which
    bounds every descendant. Siblings are generated lazily in rank order, so
    countable alphabets work without an index cutoff.
    """
    if n < 1:
        raise ValidationError(f"depth n must be >= 1, got {n}")
    policy = policy or TruncationPolicy()
    target = 1.0 - policy.tail_mass
    out: list = []
    emitted: list = []
    heap: list = []

    first = model.ranked_successor(None, 0)
    if first is not None:
        heap.append((-first[1], (first[0],), 0, 1.0))
    exhausted = False
    retained = 0.0
    while True:
        if not heap:
            exhausted = True
            break
        negm, word, rank, parent = heapq.heappop(heap)
        sib = model.ranked_successor(word[-2] if len(word) > 1 else None, rank + 1)
        if sib is not None:
            heapq.heappush(heap, (-(parent * sib[1]), word[:-1] + (sib[0],), rank + 1, parent))
        m = -negm
        if len(word) == n:
            out.append(Cylinder(word, m))
            emitted.append(m)
            retained += m
            if retained >= target or len(out) >= policy.max_atoms:
                break
        else:
            child = model.ranked_successor(word[-1], 0)
            if child is not None:
                heapq.heappush(heap, (-(m * child[1]), word + (child[0],), 0, m))

    retained = math.fsum(emitted)
    flags = []
    if exhausted:
        tail = 0.0
        complete = True
    else:
        tail = max(0.0, 1.0 - retained)
        complete = retained >= target
        if not complete:
            flags.append(f"atom cap {policy.max_atoms} reached with retained mass {retained!r}")
    return Enumeration(out, retained, tail, complete, flags)


def sample_path(model: MeasureModel, n: int, seed: int) -> tuple:
    """One word of length ``n`` drawn from ``mu``; deterministic in ``seed``."""
    if n < 1:
        raise ValidationError(f"path length must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    return tuple(int(s) for s in model.sample_paths(n, 1, rng)[0])


def chain_period(P: np.ndarray) -> int:
    """Period of an irreducible chain (gcd of level differences along edges)."""
    adj = P > 0
    order, _ = breadth_first_order(adj.astype(np.int8), 0, directed=True)
    level = np.full(P.shape[0], -1)
    level[0] = 0
    for u in order:
        for v in np.flatnonzero(adj[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
    g = 0
    for u, v in zip(*np.nonzero(adj)):
        g = math.gcd(g, int(level[u] + 1 - level[v]))
    return g


def stationary_distribution(P, tol: float = 1e-13, max_iter: int = MAX_STATIONARY_ITER) -> np.ndarray:
    """Stationary vector of an ergodic stochastic matrix by power iteration.

    Reducible or periodic chains are rejected before iterating.
    """
    P = _check_stochastic(P)
    K = P.shape[0]
    ncomp, _ = connected_components((P > 0).astype(np.int8), directed=True, connection="strong")
    if ncomp > 1:
        raise NonErgodicError(f"chain is reducible ({ncomp} communicating classes)", P)
    period = chain_period(P)
    if period > 1:
        raise PeriodicChainError(f"chain is periodic with period {period}", P)
    x = np.full(K, 1.0 / K)
    for it in range(max_iter):
        y = x @ P
        y /= y.sum()
        change = np.abs(y - x).sum()
        x = y
        if change < tol:
            # keep going while the residual still shrinks (bounded extra work)
            for _ in range(it + 100):
                y = x @ P
                y /= y.sum()
                nxt = np.abs(y - x).sum()
                if nxt >= change:
                    break
                x, change = y, nxt
            return x
    raise NonErgodicError(f"stationary iteration did not converge in {max_iter} steps", P)


def _parse_symbols(source) -> list:
    if isinstance(source, (str, bytes)):
        text = source.decode() if isinstance(source, bytes) else source
        tokens = text.split()
    else:
        tokens = list(source)
    out = []
    for pos, tok in enumerate(tokens):
        try:
            v = int(tok)
        except (TypeError, ValueError):
            raise ValidationError(f"token {pos}: {tok!r} is not an integer") from None
        if isinstance(tok, float) and tok != v:
            raise ValidationError(f"token {pos}: {tok!r} is not an integer")
        if v < 1:
            raise ValidationError(f"token {pos}: symbols must be positive, got {v}")
        out.append(v)
    if not out:
        raise ValidationError("empty symbol stream")
    return out


def ingest_stream(source, order: int = 0) -> MeasureModel:
    """Fit an empirical model to a stream of positive integers.

    ``order=0`` gives maximum-likelihood Bernoulli weights. ``order=1`` gives
    row-normalised transition counts with the stationary vector re-solved from
    the fitted matrix. Symbols are relabelled ``1..K`` in increasing order of
    their original value; ``provenance["labels"]`` keeps the mapping.
    Symbols without outgoing transitions are removed and listed in
    ``provenance["flags"]``.
    """
    if order not in (0, 1):
        raise ValidationError(f"order must be 0 or 1, got {order}")
    symbols = _parse_symbols(source)
    labels = sorted(set(symbols))
    index = {s: i for i, s in enumerate(labels)}
    seq = np.array([index[s] for s in symbols])
    K = len(labels)
    if order == 0:
        counts = np.bincount(seq, minlength=K)
        prov = {"order": 0, "labels": labels, "counts": counts.tolist(), "flags": []}
        return BernoulliModel(counts / counts.sum(), provenance=prov)

    counts = np.zeros((K, K), dtype=np.int64)
    np.add.at(counts, (seq[:-1], seq[1:]), 1)
    keep = np.ones(K, dtype=bool)
    flags = []
    while True:
        sub = counts[np.ix_(keep, keep)]
        empty = np.flatnonzero(sub.sum(axis=1) == 0)
        if empty.size == 0:
            break
        kept_idx = np.flatnonzero(keep)
        for e in empty:
            flags.append(f"symbol {labels[kept_idx[e]]} has no outgoing transitions; removed from support")
            keep[kept_idx[e]] = False
        if not keep.any():
            raise ValidationError("no symbol has an outgoing transition; cannot fit an order-1 model")
    kept_labels = [labels[i] for i in np.flatnonzero(keep)]
    C = counts[np.ix_(keep, keep)].astype(float)
    P = C / C.sum(axis=1, keepdims=True)
    p = stationary_distribution(P)
    prov = {"order": 1, "labels": kept_labels, "counts": C.astype(int).tolist(), "flags": flags}
    return MarkovModel(P, p, provenance=prov)


# ---------------------------------------------------------------------------
# model files


def model_from_dict(d: dict, base_dir: Path | None = None) -> MeasureModel:
    if not isinstance(d, dict) or "type" not in d:
        raise ValidationError("$: expected an object with a 'type' field")
    kind = d["type"]
    if kind == "bernoulli":
        if "weights" not in d:
            raise ValidationError("$.weights: missing")
        return BernoulliModel(d["weights"])
    if kind == "geometric":
        if "q" not in d:
            raise ValidationError("$.q: missing")
        return GeometricModel(d["q"])
    if kind == "markov":
        if "P" not in d:
            raise ValidationError("$.P: missing")
        P = _check_stochastic(d["P"])
        p = d.get("p")
        if p is None:
            return MarkovModel(P)
        try:
            return MarkovModel(P, p)
        except NonStationaryError as exc:
            warnings.warn(f"{exc}; recomputing the stationary vector from P", NonStationaryWarning, stacklevel=2)
            return MarkovModel(P)
    if kind == "empirical":
        order = d.get("order", 0)
        src = d.get("source")
        if src is None:
            raise ValidationError("$.source: missing")
        path = Path(src)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        try:
            text = path.read_text()
        except OSError as exc:
            raise ValidationError(f"$.source: cannot read {path}: {exc.strerror}") from None
        return ingest_stream(text, order)
    raise ValidationError(f"$.type: unknown model type {kind!r}")


def load_model(path) -> MeasureModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"{path}: cannot read model file: {exc.strerror}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    try:
        return model_from_dict(d, path.parent)
    except ValidationError as exc:
        raise type(exc)(f"{path}: {exc}") from None
