"""Truncated multi-sequences and the weighted norms ``||a||_p``.

Elements of the sequence models of the Schwartz space and its dual are
stored as coefficients on the net-square ``{0, ..., m}^d``, flattened in
lexicographic row-major order (the first index varies slowest).  The
weight of a multi-index is ``(1+n)^q = prod_i (1+n_i)^q``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from .errors import CapacityError, InvalidArgumentError

MAX_DIM = 3
P_MAX = 16
LAYOUT = "lex-row-major"

# exp() of larger magnitudes leaves the double range
_LOG_SAFE = 600.0

MultiIndex = tuple


def as_multi_index(n, dim: int | None = None) -> tuple[int, ...]:
    """Validate ``n`` as a multi-index (tuple of nonnegative ints)."""
    if isinstance(n, (int, np.integer)):
        n = (n,)
    idx = tuple(int(k) for k in n)
    if len(idx) < 1:
        raise InvalidArgumentError("multi-index must have at least one component")
    if any(k < 0 for k in idx):
        raise InvalidArgumentError(f"multi-index components must be >= 0, got {idx}")
    if dim is not None and len(idx) != dim:
        raise InvalidArgumentError(
            f"multi-index {idx} has dimension {len(idx)}, expected {dim}")
    return idx


def _check_shape(dim: int, order: int) -> None:
    if not isinstance(dim, (int, np.integer)) or dim < 1:
        raise InvalidArgumentError(f"dim must be a positive integer, got {dim!r}")
    if dim > MAX_DIM:
        raise CapacityError(f"dim={dim} exceeds the cap of {MAX_DIM}")
    if not isinstance(order, (int, np.integer)) or order < 0:
        raise InvalidArgumentError(f"order must be a nonnegative integer, got {order!r}")


@lru_cache(maxsize=64)
def _multi_indices(dim: int, order: int) -> np.ndarray:
    idx = np.indices((order + 1,) * dim).reshape(dim, -1).T.copy()
    idx.setflags(write=False)
    return idx


def multi_indices(dim: int, order: int) -> np.ndarray:
    """All multi-indices of the net-square, shape ``((m+1)^d, d)``, lex order."""
    _check_shape(dim, order)
    return _multi_indices(int(dim), int(order))


def flat_index(n, order: int) -> int:
    """Position of multi-index ``n`` in the lex row-major layout."""
    idx = as_multi_index(n)
    if any(k > order for k in idx):
        raise InvalidArgumentError(f"multi-index {idx} lies outside the net-square of order {order}")
    pos = 0
    for k in idx:
        pos = pos * (order + 1) + k
    return pos


@lru_cache(maxsize=64)
def _log_one_plus(dim: int, order: int) -> np.ndarray:
    out = np.log1p(_multi_indices(dim, order).astype(float)).sum(axis=1)
    out.setflags(write=False)
    return out


def log_weights(dim: int, order: int, q: float) -> np.ndarray:
    """``log (1+n)^q`` for every n on the net-square."""
    _check_shape(dim, order)
    return q * _log_one_plus(int(dim), int(order))


def weights(dim: int, order: int, q: float) -> np.ndarray:
    """``(1+n)^q`` for every n on the net-square (may under/overflow for huge q)."""
    lw = log_weights(dim, order, q)
    if np.max(np.abs(lw), initial=0.0) <= _LOG_SAFE:
        # direct powers are exact for small integer q, exp(log) is not
        return np.prod((1.0 + _multi_indices(int(dim), int(order))) ** q, axis=1)
    return np.exp(lw)


def mode_weight(n, q: float) -> float:
    """``(1+n)^q`` for a single multi-index."""
    return math.prod((1.0 + k) ** q for k in as_multi_index(n))


@dataclass(frozen=True, eq=False)
class TruncatedSeq:
    """Real coefficients ``(a_n)`` for ``n`` in the net-square of order ``m``."""

    dim: int
    order: int
    values: np.ndarray

    def __post_init__(self):
        _check_shape(self.dim, self.order)
        vals = np.array(self.values, dtype=float).reshape(-1)
        expected = (self.order + 1) ** self.dim
        if vals.size != expected:
            raise InvalidArgumentError(
                f"values has length {vals.size}, expected (order+1)^dim = {expected}")
        if not np.all(np.isfinite(vals)):
            raise InvalidArgumentError("coefficients must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, dim: int, order: int) -> "TruncatedSeq":
        _check_shape(dim, order)
        return cls(dim, order, np.zeros((order + 1) ** dim))

    @classmethod
    def unit(cls, n, order: int | None = None) -> "TruncatedSeq":
        """The basis sequence ``e_n``; the order defaults to ``max(n)``."""
        idx = as_multi_index(n)
        order = max(idx) if order is None else order
        out = np.zeros((order + 1) ** len(idx))
        out[flat_index(idx, order)] = 1.0
        return cls(len(idx), order, out)

    @classmethod
    def from_tensor(cls, tensor) -> "TruncatedSeq":
        t = np.asarray(tensor, dtype=float)
        if len(set(t.shape)) != 1:
            raise InvalidArgumentError(f"tensor must be a cube, got shape {t.shape}")
        return cls(t.ndim, t.shape[0] - 1, t.reshape(-1))

    @classmethod
    def from_function(cls, fn, dim: int, order: int) -> "TruncatedSeq":
        """Build ``a_n = fn(n)`` from a function of the multi-index tuple."""
        idx = multi_indices(dim, order)
        return cls(dim, order, [fn(tuple(int(k) for k in row)) for row in idx])

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, n) -> float:
        idx = as_multi_index(n, self.dim)
        if any(k > self.order for k in idx):
            return 0.0
        return float(self.values[flat_index(idx, self.order)])

    def tensor(self) -> np.ndarray:
        return self.values.reshape((self.order + 1,) * self.dim)

    def resize(self, order: int) -> "TruncatedSeq":
        """Restrict to, or zero-extend onto, the net-square of ``order``."""
        if order == self.order:
            return self
        return TruncatedSeq(self.dim, order, _resize_tensor(self.values, self.dim, self.order, order))

    def _binary(self, other, op):
        if not isinstance(other, TruncatedSeq):
            return NotImplemented
        _same_dim(self, other)
        m = max(self.order, other.order)
        return TruncatedSeq(self.dim, m, op(self.resize(m).values, other.resize(m).values))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __neg__(self):
        return TruncatedSeq(self.dim, self.order, -self.values)

    def __mul__(self, scalar):
        if isinstance(scalar, TruncatedSeq):
            return NotImplemented
        return TruncatedSeq(self.dim, self.order, self.values * float(scalar))

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, TruncatedSeq):
            return NotImplemented
        return (self.dim == other.dim and self.order == other.order
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.dim, self.order, self.values.tobytes()))

    def __repr__(self):
        return f"TruncatedSeq(dim={self.dim}, order={self.order}, values={self.values.tolist()!r})"

    def to_dict(self) -> dict:
        return {"dim": self.dim, "order": self.order, "layout": LAYOUT,
                "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "TruncatedSeq":
        for key in ("dim", "order", "values"):
            if key not in data:
                raise InvalidArgumentError(f"coefficient record is missing {key!r}")
        layout = data.get("layout", LAYOUT)
        if layout != LAYOUT:
            raise InvalidArgumentError(f"unsupported layout {layout!r}, expected {LAYOUT!r}")
        return cls(int(data["dim"]), int(data["order"]), data["values"])


def _resize_tensor(values: np.ndarray, dim: int, old: int, new: int) -> np.ndarray:
    """Restrict or zero-extend flat coefficient rows (last axis) between orders."""
    lead = values.shape[:-1]
    t = values.reshape(lead + (old + 1,) * dim)
    k = min(old, new) + 1
    out = np.zeros(lead + (new + 1,) * dim)
    sl = (Ellipsis,) + (slice(0, k),) * dim
    out[sl] = t[sl]
    return out.reshape(lead + (-1,))


def _same_dim(a: TruncatedSeq, b: TruncatedSeq) -> None:
    if a.dim != b.dim:
        raise InvalidArgumentError(f"dimension mismatch: {a.dim} vs {b.dim}")


@dataclass(frozen=True, eq=False)
class SeqBatch:
    """``N`` truncated sequences sharing one net-square, stored as an (N, K) array."""

    dim: int
    order: int
    values: np.ndarray

    def __post_init__(self):
        _check_shape(self.dim, self.order)
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[1] != (self.order + 1) ** self.dim:
            raise InvalidArgumentError(
                f"batch must have shape (N, {(self.order + 1) ** self.dim}), got {vals.shape}")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, j: int) -> TruncatedSeq:
        return TruncatedSeq(self.dim, self.order, self.values[j])

    def __iter__(self) -> Iterator[TruncatedSeq]:
        for j in range(len(self)):
            yield self[j]

    def resize(self, order: int) -> "SeqBatch":
        if order == self.order:
            return self
        return SeqBatch(self.dim, order, _resize_tensor(self.values, self.dim, self.order, order))


Samples = Union[SeqBatch, Sequence[TruncatedSeq]]


def as_batch(samples: Samples) -> SeqBatch:
    """Accept a ``SeqBatch`` or a list of ``TruncatedSeq`` (zero-extended to a common order)."""
    if isinstance(samples, SeqBatch):
        return samples
    samples = list(samples)
    if not samples:
        raise InvalidArgumentError("empty sample set")
    dim = samples[0].dim
    if any(s.dim != dim for s in samples):
        raise InvalidArgumentError("samples have inconsistent dimensions")
    order = max(s.order for s in samples)
    return SeqBatch(dim, order, np.stack([s.resize(order).values for s in samples]))


def bank_matrix(points: Iterable[TruncatedSeq], dim: int, order: int) -> np.ndarray:
    """Stack test points as rows aligned to ``order`` (the pairing zero-extension rule)."""
    rows = []
    for a in points:
        if a.dim != dim:
            raise InvalidArgumentError(f"dimension mismatch: {a.dim} vs {dim}")
        rows.append(a.resize(order).values)
    return np.stack(rows) if rows else np.zeros((0, (order + 1) ** dim))


def pairing(b: TruncatedSeq, a: TruncatedSeq) -> float:
    """``<b, a> = sum_n a_n b_n``; the shorter sequence is zero-extended."""
    _same_dim(b, a)
    m = min(a.order, b.order)
    return float(np.dot(b.resize(m).values, a.resize(m).values))


def _check_p(p: int) -> None:
    if abs(p) > P_MAX:
        raise CapacityError(f"|p|={abs(p)} exceeds p_max={P_MAX}")


def batch_norm_p(values: np.ndarray, dim: int, order: int, p: int) -> np.ndarray:
    """``||a||_p`` for every row of an (N, K) coefficient array."""
    _check_p(p)
    values = np.atleast_2d(values)
    lw = log_weights(dim, order, 2 * p)
    if np.max(np.abs(lw), initial=0.0) <= _LOG_SAFE:
        return np.sqrt((values ** 2) @ np.exp(lw))
    # log-sum-exp over modes
    with np.errstate(divide="ignore"):
        terms = lw + 2.0 * np.log(np.abs(values))
    top = terms.max(axis=1, keepdims=True)
    finite = np.isfinite(top[:, 0])
    out = np.zeros(values.shape[0])
    s = np.exp(terms[finite] - top[finite]).sum(axis=1)
    out[finite] = np.exp(0.5 * (top[finite, 0] + np.log(s)))
    return out


def norm_p(a: TruncatedSeq, p: int) -> float:
    """``||a||_p = sqrt(sum (1+n)^{2p} a_n^2)`` for integer ``p`` (negative allowed)."""
    return float(batch_norm_p(a.values, a.dim, a.order, p)[0])


def dual_norm(b: TruncatedSeq, p: int) -> float:
    """Norm of ``<b, .>`` as a functional on the ``p``-space; equals ``||b||_{-p}``."""
    if p < 0:
        raise InvalidArgumentError("dual_norm expects p >= 0")
    return norm_p(b, -p)


def dual_maximizer(b: TruncatedSeq, p: int) -> TruncatedSeq | None:
    """Unit ``||.||_p`` vector attaining the dual norm of ``b``; ``None`` when ``b = 0``."""
    nb = dual_norm(b, p)
    if nb == 0.0:
        return None
    w = weights(b.dim, b.order, -2 * p)
    return TruncatedSeq(b.dim, b.order, w * b.values / nb)


@lru_cache(maxsize=None)
def zeta_const(s: int) -> float:
    """Riemann zeta at an integer ``s >= 2`` (partial sum to 1e6 plus tail correction)."""
    if int(s) != s:
        raise InvalidArgumentError(f"s must be an integer, got {s!r}")
    s = int(s)
    if s < 2:
        raise InvalidArgumentError(f"zeta({s}) diverges; s must be >= 2")
    N = 10 ** 6
    n = np.arange(N, 0, -1, dtype=float)
    head = math.fsum(n ** -s)
    # Euler-Maclaurin remainder of sum_{n>N} n^-s
    tail = N ** (1 - s) / (s - 1) - 0.5 * N ** -s + s / 12.0 * N ** (-s - 1)
    return head + tail


@dataclass(frozen=True)
class GrowthEnvelope:
    """Polynomial growth certificate ``|b_n| <= c (1+n)^p``."""

    p: int
    c: float

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 0:
            raise InvalidArgumentError(f"envelope p must be a nonnegative integer, got {self.p!r}")
        if not math.isfinite(self.c) or self.c < 0:
            raise InvalidArgumentError(f"envelope c must be finite and >= 0, got {self.c!r}")

    def to_dict(self) -> dict:
        return {"p": int(self.p), "c": float(self.c)}

    @classmethod
    def from_dict(cls, data: dict) -> "GrowthEnvelope":
        return cls(int(data["p"]), float(data["c"]))


def envelope_norm_bound(env: GrowthEnvelope, d: int) -> float:
    """Guaranteed bound ``c * zeta(2)^{d/2}`` on ``||b||_{-p-1}`` under the envelope."""
    return env.c * zeta_const(2) ** (d / 2)


@dataclass(frozen=True)
class EnvelopeCheck:
    """Result of ``check_envelope``; truthy iff the envelope holds.

    ``prefix_only`` is always set: only the stored truncation is inspected,
    the infinite tail is never certified by this check.
    """

    holds: bool
    first_violation: tuple[int, ...] | None = None
    prefix_only: bool = True

    def __bool__(self) -> bool:
        return self.holds


def check_envelope(b: TruncatedSeq, env: GrowthEnvelope) -> EnvelopeCheck:
    idx = multi_indices(b.dim, b.order)
    bound = env.c * np.prod((1.0 + idx) ** env.p, axis=1)
    bad = np.flatnonzero(np.abs(b.values) > bound)
    if bad.size:
        return EnvelopeCheck(False, tuple(int(k) for k in idx[bad[0]]))
    return EnvelopeCheck(True)


def save_coefficients(path, seq: TruncatedSeq) -> None:
    Path(path).write_text(json.dumps(seq.to_dict()) + "\n")


def load_coefficients(path) -> TruncatedSeq:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"{path}: not valid JSON ({exc})") from exc
    return TruncatedSeq.from_dict(data)
