"""Gaussian generalized random fields in Hermite-coefficient space.

A field is specified by independent centered coefficients ``b_n`` with
per-mode variances ``sigma_n^2``; it is observed only through pairings
``X(f) = <b, a>`` with ``a`` the Hermite coefficients of a test function.
The white profile (``sigma_n^2 = 1``) is the standard generalized Gaussian
field: its characteristic functional ``exp(-||f||_2^2 / 2)`` together with
orthonormality of the ``h_n`` forces the coefficients to be iid N(0, 1).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtri

from .errors import InvalidArgumentError
from .rng import RandomStream
from .seqspace import SeqBatch, TruncatedSeq, _check_shape, multi_indices, pairing, weights

PROFILES = ("white", "power_decay", "table")

# Samples per generation chunk.  Fixed so that results never depend on threads.
CHUNK = 2048

Quantile = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class FieldSpec:
    dim: int
    order: int
    profile: str = "white"
    q: Optional[float] = None
    table: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        _check_shape(self.dim, self.order)
        if self.profile not in PROFILES:
            raise InvalidArgumentError(f"unknown variance profile {self.profile!r}; expected one of {PROFILES}")
        if self.profile == "power_decay" and (self.q is None or not np.isfinite(self.q)):
            raise InvalidArgumentError("power_decay profile needs a finite q")
        if self.profile == "table":
            if self.table is None:
                raise InvalidArgumentError("table profile needs a variance table")
            t = np.array(self.table, dtype=float).reshape(-1)
            if t.size != (self.order + 1) ** self.dim:
                raise InvalidArgumentError(
                    f"variance table has {t.size} entries, expected {(self.order + 1) ** self.dim}")
            if not np.all(np.isfinite(t)) or np.any(t < 0):
                raise InvalidArgumentError("variances must be finite and >= 0")
            t.setflags(write=False)
            object.__setattr__(self, "table", t)

    @classmethod
    def white(cls, dim: int, order: int) -> "FieldSpec":
        return cls(dim, order, "white")

    @classmethod
    def power_decay(cls, dim: int, order: int, q: float) -> "FieldSpec":
        return cls(dim, order, "power_decay", q=float(q))

    @classmethod
    def from_table(cls, dim: int, order: int, table) -> "FieldSpec":
        return cls(dim, order, "table", table=table)

    def variances(self) -> np.ndarray:
        if self.profile == "white":
            return np.ones((self.order + 1) ** self.dim)
        if self.profile == "power_decay":
            return weights(self.dim, self.order, -2 * self.q)
        return self.table.copy()

    def scaled(self, lam: float) -> "FieldSpec":
        """Spec of ``lam * X``."""
        return FieldSpec.from_table(self.dim, self.order, lam ** 2 * self.variances())

    def to_dict(self) -> dict:
        prof: dict = {"kind": self.profile}
        if self.profile == "power_decay":
            prof["q"] = self.q
        elif self.profile == "table":
            prof["table"] = self.table.tolist()
        return {"dim": self.dim, "order": self.order, "profile": prof}

    @classmethod
    def from_dict(cls, data: dict) -> "FieldSpec":
        try:
            prof = data.get("profile", {"kind": "white"})
            if isinstance(prof, str):
                prof = {"kind": prof}
            return cls(int(data["dim"]), int(data["order"]), prof["kind"],
                       q=prof.get("q"), table=prof.get("table"))
        except (KeyError, TypeError) as exc:
            raise InvalidArgumentError(f"malformed field spec {data!r}: {exc}") from exc


def truncated_white(dim: int, order: int, cutoff: int) -> FieldSpec:
    """White noise keeping only the modes of the net-square of order ``cutoff``."""
    idx = multi_indices(dim, order)
    return FieldSpec.from_table(dim, order, (idx.max(axis=1) <= cutoff).astype(float))


def escape_spec(dim: int, order: int, variance: float) -> FieldSpec:
    """All mass on mode 0 with the given variance (``b = sqrt(v) g e_0``)."""
    t = np.zeros((order + 1) ** dim)
    t[0] = variance
    return FieldSpec.from_table(dim, order, t)


def _chunk(spec: FieldSpec, rng: RandomStream, start: int, stop: int,
           sd: np.ndarray, quantile: Quantile) -> np.ndarray:
    k = sd.size
    u = rng.uniforms((stop - start) * k, offset=start * k).reshape(stop - start, k)
    return np.asarray(quantile(u), dtype=float) * sd


def sample_batch(spec: FieldSpec, rng: RandomStream, n: int, *, threads: int = 1,
                 quantile: Quantile | None = None) -> SeqBatch:
    """``n`` independent draws of the field.

    Draw ``j`` consumes uniforms ``[j*K, (j+1)*K)`` of ``rng`` (``K`` = number
    of modes), so the batch is bitwise identical for any ``threads``.
    ``quantile`` maps uniforms to unit-scale coefficient variates (default:
    the standard normal quantile); it receives arrays of shape ``(rows, K)``
    and may treat columns (modes) differently.
    """
    if n < 1:
        raise InvalidArgumentError("sample count must be >= 1")
    quantile = ndtri if quantile is None else quantile
    sd = np.sqrt(spec.variances())
    bounds = [(s, min(s + CHUNK, n)) for s in range(0, n, CHUNK)]
    work = lambda b: _chunk(spec, rng, b[0], b[1], sd, quantile)
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    return SeqBatch(spec.dim, spec.order, np.concatenate(parts))


def sample_field(spec: FieldSpec, rng: RandomStream, quantile: Quantile | None = None) -> TruncatedSeq:
    """One draw; identical to the first row of ``sample_batch`` on the same stream."""
    return sample_batch(spec, rng, 1, quantile=quantile)[0]


def field_pairing(b: TruncatedSeq, a: TruncatedSeq) -> float:
    """The observable ``X(f) = <b, a>``."""
    return pairing(b, a)


def batch_pairings(samples: SeqBatch, a: TruncatedSeq) -> np.ndarray:
    if a.dim != samples.dim:
        raise InvalidArgumentError(f"dimension mismatch: {a.dim} vs {samples.dim}")
    m = min(a.order, samples.order)
    return samples.resize(m).values @ a.resize(m).values


def pairing_variance(spec: FieldSpec, a: TruncatedSeq) -> float:
    """``Var X(f) = sum_n sigma_n^2 a_n^2``."""
    if a.dim != spec.dim:
        raise InvalidArgumentError(f"dimension mismatch: {a.dim} vs {spec.dim}")
    a = a.resize(spec.order)
    return float(np.dot(spec.variances(), a.values ** 2))


def gaussian_charfun_exact(spec: FieldSpec, a: TruncatedSeq) -> complex:
    """``E exp(i X(f)) = exp(-Var X(f) / 2)`` for the centered Gaussian field."""
    return complex(np.exp(-0.5 * pairing_variance(spec, a)), 0.0)
