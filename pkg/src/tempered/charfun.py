"""Characteristic functionals: estimation, positive-definiteness and tail bounds.

Complex values are numpy ``complex128``.  Every statistical verdict here is
sampled evidence: a finite bank of test points stands in for "all ``a``",
which no finite computation can cover.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import InvalidArgumentError, PropagationError
from .fields import FieldSpec, sample_batch
from .rng import RandomStream
from .seqspace import (
    SeqBatch, Samples, TruncatedSeq, as_batch, bank_matrix, batch_norm_p, weights, zeta_const,
)

SAMPLED_ONLY_CAVEAT = (
    "hypothesis constants are checked on finitely many test points only; "
    "the bound over all finitely supported a is not established"
)

MAX_GRAM_POINTS = 64


def _stderr(x: np.ndarray, axis: int = 0) -> np.ndarray:
    n = x.shape[axis]
    if n < 2:
        return np.full(np.delete(x.shape, axis), 1.0 / math.sqrt(n))
    return x.std(axis=axis, ddof=1) / math.sqrt(n)


@dataclass(eq=False)
class CharFunEstimate:
    """Monte-Carlo estimate of ``E exp(i <X, a>)`` on a bank of test points."""

    bank: list[TruncatedSeq]
    values: np.ndarray
    sample_count: int
    stderr_re: np.ndarray
    stderr_im: np.ndarray

    @property
    def stderr(self) -> np.ndarray:
        """Standard error of the complex estimate, ``hypot(se_re, se_im)``."""
        return np.hypot(self.stderr_re, self.stderr_im)

    @property
    def stderr_bound(self) -> float:
        """A priori bound ``1/sqrt(N)`` on each component's standard error."""
        return 1.0 / math.sqrt(self.sample_count)

    def to_dict(self) -> dict:
        return {
            "sample_count": self.sample_count,
            "points": [
                {"re": float(v.real), "im": float(v.imag), "stderr_re": float(sr), "stderr_im": float(si)}
                for v, sr, si in zip(self.values, self.stderr_re, self.stderr_im)
            ],
        }


def empirical_charfun(samples: Samples, bank: Sequence[TruncatedSeq]) -> CharFunEstimate:
    """``(1/N) sum_j exp(i <b_j, a_k>)`` for every bank point ``a_k``."""
    batch = as_batch(samples)
    if len(batch) < 1:
        raise InvalidArgumentError("empirical_charfun needs at least one sample")
    bank = list(bank)
    phases = batch.values @ bank_matrix(bank, batch.dim, batch.order).T
    c, s = np.cos(phases), np.sin(phases)
    return CharFunEstimate(bank, c.mean(axis=0) + 1j * s.mean(axis=0), len(batch),
                           _stderr(c), _stderr(s))


class EmpiricalCharFun:
    """The empirical characteristic functional of a sample, as a callable."""

    def __init__(self, samples: Samples):
        self.samples = as_batch(samples)

    def __call__(self, a: TruncatedSeq) -> complex:
        return complex(self.evaluate_many([a])[0])

    def evaluate_many(self, points: Sequence[TruncatedSeq]) -> np.ndarray:
        return empirical_charfun(self.samples, points).values


class PSDCheck(NamedTuple):
    passed: bool
    min_eigenvalue: float


def charfun_gram(charfun: Callable[[TruncatedSeq], complex],
                 points: Sequence[TruncatedSeq]) -> np.ndarray:
    """``G_ij = L(a_i - a_j)``."""
    k = len(points)
    diffs = [points[i] - points[j] for i in range(k) for j in range(k)]
    if hasattr(charfun, "evaluate_many"):
        vals = np.asarray(charfun.evaluate_many(diffs), dtype=complex)
    else:
        vals = np.array([complex(charfun(d)) for d in diffs])
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        i, j = divmod(int(bad[0]), k)
        raise PropagationError(f"charfun returned {vals[bad[0]]} at points[{i}] - points[{j}]")
    return vals.reshape(k, k)


def gram_psd_check(charfun: Callable[[TruncatedSeq], complex], points: Sequence[TruncatedSeq],
                   tol: float = 1e-8) -> PSDCheck:
    """Is the Hermitized Gram ``(G + G*)/2`` PSD up to ``tol * max(1, max eigenvalue)``?"""
    points = list(points)
    if not points:
        raise InvalidArgumentError("need at least one point")
    if len(points) > MAX_GRAM_POINTS:
        raise InvalidArgumentError(f"at most {MAX_GRAM_POINTS} points, got {len(points)}")
    if len(set(points)) != len(points):
        raise InvalidArgumentError("points must be pairwise distinct")
    g = charfun_gram(charfun, points)
    eig = np.linalg.eigvalsh(0.5 * (g + g.conj().T))
    lo, hi = float(eig[0]), float(eig[-1])
    return PSDCheck(lo >= -tol * max(1.0, hi), lo)


def nu_spec(m: int, sigma: float, q: float, dim: int = 1) -> FieldSpec:
    """Product Gaussian with mode variances ``sigma^2 (1+n)^{-2q}`` on the order-``m`` net-square."""
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be > 0, got {sigma!r}")
    return FieldSpec.from_table(dim, m, sigma ** 2 * weights(dim, m, -2 * q))


def nu_gaussian_sample(m: int, sigma: float, q: float, rng: RandomStream, dim: int = 1) -> TruncatedSeq:
    return nu_gaussian_batch(m, sigma, q, rng, 1, dim=dim)[0]


def nu_gaussian_batch(m: int, sigma: float, q: float, rng: RandomStream, n: int,
                      dim: int = 1, threads: int = 1) -> SeqBatch:
    return sample_batch(nu_spec(m, sigma, q, dim), rng, n, threads=threads)


def nu_charfun_exact(b: TruncatedSeq, m: int, sigma: float, q: float) -> complex:
    """``exp(-sigma^2/2 sum_{n <= m} (1+n)^{-2q} b_n^2)``."""
    b = b.resize(m)
    s = float(np.dot(weights(b.dim, m, -2 * q), b.values ** 2))
    return complex(math.exp(-0.5 * sigma ** 2 * s), 0.0)


def gaussian_tail_exact(spec: FieldSpec, q: int, sigma: float) -> float:
    """``E[1 - exp(-sigma^2/2 ||b||_{-q}^2)] = 1 - prod_n (1 + sigma^2 s_n^2 (1+n)^{-2q})^{-1/2}``."""
    t = sigma ** 2 * spec.variances() * weights(spec.dim, spec.order, -2 * q)
    return float(-np.expm1(-0.5 * np.log1p(t).sum()))


@dataclass
class MinlosRow:
    sigma: float
    lhs: float
    lhs_stderr: float
    rhs: float
    passed: bool

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "lhs": self.lhs, "lhs_stderr": self.lhs_stderr,
                "rhs": self.rhs, "pass": self.passed}


@dataclass
class MinlosReport:
    p: int
    q: int
    eps: float
    c: float
    dim: int
    sample_count: int
    z: float
    rows: list[MinlosRow] = field(default_factory=list)
    caveat: str = SAMPLED_ONLY_CAVEAT

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def to_dict(self) -> dict:
        return {"p": self.p, "q": self.q, "eps": self.eps, "c": self.c, "dim": self.dim,
                "sample_count": self.sample_count, "z": self.z, "pass": self.passed,
                "caveat": self.caveat, "rows": [r.to_dict() for r in self.rows]}


def minlos_tail_check(samples: Samples, p: int, q: int, sigma_grid: Sequence[float],
                      eps: float, c: float, z: float = 3.0) -> MinlosReport:
    """Compare ``E[1 - exp(-sigma^2/2 ||b||_{-q}^2)]`` with ``eps + c sigma^2 zeta(2(q-p))^d``.

    ``eps`` and ``c`` must come from the hypothesis ``1 - Re L(a) <= eps + c ||a||_p^2``
    (supplied analytically or by ``continuity_probe``).  A row fails only when
    ``lhs - z * stderr > rhs``.
    """
    if q <= p:
        raise InvalidArgumentError(f"need q > p (zeta(2(q-p)) diverges for q={q}, p={p})")
    batch = as_batch(samples)
    sq = batch_norm_p(batch.values, batch.dim, batch.order, -q) ** 2
    zc = zeta_const(2 * (q - p)) ** batch.dim
    report = MinlosReport(p, q, float(eps), float(c), batch.dim, len(batch), z)
    for sigma in sigma_grid:
        vals = -np.expm1(-0.5 * sigma ** 2 * sq)
        lhs = float(vals.mean())
        se = float(_stderr(vals[:, None])[0])
        rhs = eps + c * sigma ** 2 * zc
        report.rows.append(MinlosRow(float(sigma), lhs, se, rhs, not (lhs - z * se > rhs)))
    return report


@dataclass(frozen=True)
class ProbeResult:
    p: int
    delta: float
    max_deficit: float
    sampled_only: bool = True

    def hypothesis(self, eps: float) -> tuple[float, float]:
        """Constants ``(eps, c)`` with ``1 - Re L(a) <= eps + c ||a||_p^2``, ``c = 2/delta^2``.

        Valid wherever the probed ball bound holds, since ``1 - Re L <= 2`` outside it.
        """
        return eps, 2.0 / self.delta ** 2


def continuity_probe(charfun: Callable[[TruncatedSeq], complex], p_candidates: Sequence[int],
                     delta_grid: Sequence[float], eps_target: float, probe_count: int,
                     rng: RandomStream, dim: int = 1, order: int = 4,
                     directions: Sequence[TruncatedSeq] | None = None) -> ProbeResult | None:
    """Smallest ``p`` (then largest ``delta``) with ``max 1 - Re L(a) <= eps_target``
    over probes on the sphere ``||a||_p = delta (1 - 1e-6)``.

    Probes are ``probe_count`` Gaussian directions drawn from ``rng`` plus any
    explicit ``directions``.  Returns ``None`` when nothing passes.
    """
    if probe_count < 1:
        raise InvalidArgumentError("probe_count must be >= 1")
    k = (order + 1) ** dim
    dirs = rng.normals(probe_count * k).reshape(probe_count, k)
    if directions:
        dirs = np.vstack([dirs, bank_matrix(directions, dim, order)])
    dirs = dirs[np.any(dirs != 0, axis=1)]
    for p in sorted(p_candidates):
        unit = dirs / batch_norm_p(dirs, dim, order, p)[:, None]
        for delta in sorted(delta_grid, reverse=True):
            pts = [TruncatedSeq(dim, order, row) for row in unit * (delta * (1 - 1e-6))]
            if hasattr(charfun, "evaluate_many"):
                vals = np.asarray(charfun.evaluate_many(pts), dtype=complex)
            else:
                vals = np.array([complex(charfun(a)) for a in pts])
            deficit = float(np.max(1.0 - vals.real))
            if deficit <= eps_target:
                return ProbeResult(int(p), float(delta), deficit)
    return None
