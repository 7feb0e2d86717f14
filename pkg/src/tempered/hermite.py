"""Hermite functions, Gauss-Hermite rules and the Hermite coefficient transform.

The 1-d Hermite functions are evaluated with the normalized three-term
recurrence

    h_{k+1}(x) = x sqrt(2/(k+1)) h_k(x) - sqrt(k/(k+1)) h_{k-1}(x),
    h_0(x) = pi^{-1/4} exp(-x^2/2),

carrying a per-point log scale so that neither the Gaussian factor nor the
polynomial part leaves the double range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import AliasingError, CapacityError, InvalidArgumentError
from .seqspace import MAX_DIM, TruncatedSeq, as_multi_index, multi_indices

MAX_RULE_ORDER = 512
MAX_GRID_POINTS = 1 << 24

_PI_M14 = math.pi ** -0.25
_RESCALE = 1e150
_LOG_RESCALE = math.log(_RESCALE)


def _hermite_table(nmax: int, x: np.ndarray) -> np.ndarray:
    """Rows ``h_0(x) .. h_nmax(x)``; shape ``(nmax+1,) + x.shape``."""
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    logscale = -0.5 * x * x
    prev = np.zeros(x.shape)
    cur = np.full(x.shape, _PI_M14)

    def emit(k):
        with np.errstate(divide="ignore"):
            mag = np.exp(np.log(np.abs(cur)) + logscale)
        out[k] = np.copysign(mag, cur)

    emit(0)
    for k in range(nmax):
        nxt = x * math.sqrt(2.0 / (k + 1)) * cur - math.sqrt(k / (k + 1)) * prev
        prev, cur = cur, nxt
        big = np.abs(cur) > _RESCALE
        if np.any(big):
            cur = np.where(big, cur / _RESCALE, cur)
            prev = np.where(big, prev / _RESCALE, prev)
            logscale = np.where(big, logscale + _LOG_RESCALE, logscale)
        emit(k + 1)
    return out


def hermite_eval(n: int, x):
    """Evaluate the normalized Hermite function ``h_n`` at ``x`` (scalar or array)."""
    if int(n) != n or n < 0:
        raise InvalidArgumentError(f"Hermite index must be a nonnegative integer, got {n!r}")
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("x must be finite")
    val = _hermite_table(int(n), arr)[int(n)]
    return float(val) if val.ndim == 0 else val


def _points(x, dim: int) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=float)
    single = pts.ndim <= 1
    pts = np.atleast_2d(pts)
    if pts.ndim != 2 or pts.shape[-1] != dim:
        raise InvalidArgumentError(f"point dimension {pts.shape[-1]} does not match index dimension {dim}")
    if not np.all(np.isfinite(pts)):
        raise InvalidArgumentError("x must be finite")
    return pts, single


def hermite_eval_multi(n, x):
    """Tensor-product Hermite function ``h_n(x) = prod_i h_{n_i}(x_i)``.

    ``x`` is a single point of shape ``(d,)`` or a stack of shape ``(K, d)``.
    """
    idx = as_multi_index(n)
    pts, single = _points(x, len(idx))
    val = np.ones(pts.shape[0])
    for axis, k in enumerate(idx):
        val = val * _hermite_table(k, pts[:, axis])[k]
    return float(val[0]) if single else val


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Hermite rule for the weight ``exp(-x^2)``.

    ``scaled_weights`` holds ``w_i exp(x_i^2)``, computed directly so that it
    stays accurate where ``weights`` underflows.
    """

    order: int
    nodes: np.ndarray
    weights: np.ndarray
    scaled_weights: np.ndarray

    def __post_init__(self):
        for name in ("nodes", "weights", "scaled_weights"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (self.order,):
                raise InvalidArgumentError(f"{name} must have length {self.order}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def integrate(self, g: Callable[[np.ndarray], np.ndarray]) -> float:
        """Approximate ``int g(x) exp(-x^2) dx``."""
        return float(np.dot(self.weights, g(self.nodes)))


@lru_cache(maxsize=32)
def _rule(order: int) -> QuadratureRule:
    k = np.arange(1, order, dtype=float)
    nodes = eigh_tridiagonal(np.zeros(order), np.sqrt(k / 2.0), eigvals_only=True)
    # Newton polish on h_order, using h_n' = sqrt(2n) h_{n-1} - x h_n
    for _ in range(2):
        tab = _hermite_table(order, nodes)
        deriv = math.sqrt(2.0 * order) * tab[order - 1] - nodes * tab[order]
        nodes = nodes - tab[order] / deriv
    nodes = 0.5 * (nodes - nodes[::-1])
    h_prev = _hermite_table(order - 1, nodes)[order - 1]
    scaled = 1.0 / (order * h_prev ** 2)
    return QuadratureRule(order, nodes, scaled * np.exp(-nodes ** 2), scaled)


def gauss_hermite_rule(order: int, cap: int = MAX_RULE_ORDER) -> QuadratureRule:
    """Nodes and weights exact for polynomials of degree ``<= 2*order - 1``.

    Nodes are eigenvalues of the Jacobi matrix of the Hermite recurrence
    (Golub-Welsch); weights come from the Christoffel formula
    ``w_i = exp(-x_i^2) / (order * h_{order-1}(x_i)^2)``.
    """
    if int(order) != order or order < 1:
        raise InvalidArgumentError(f"quadrature order must be a positive integer, got {order!r}")
    if order > cap:
        raise CapacityError(f"quadrature order {order} exceeds the cap of {cap}")
    return _rule(int(order))


def default_rule_order(m: int) -> int:
    return 2 * m + 16


def quadrature_nodes(rule: QuadratureRule, dim: int) -> np.ndarray:
    """Tensor grid of nodes, shape ``(order^d, d)``, first axis slowest."""
    grids = np.meshgrid(*([rule.nodes] * dim), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def hermite_transform(f: Callable[[np.ndarray], np.ndarray], m: int,
                      rule: QuadratureRule | None = None, dim: int = 1) -> TruncatedSeq:
    """Hermite coefficients ``a_n = <f, h_n>`` for ``n`` on the net-square of order ``m``.

    ``f`` is called once on the full tensor grid, an array of shape
    ``(order^d, d)``, and must return one value per row.  The result is exact
    up to rounding whenever ``f * h_n * exp(|x|^2)`` is a polynomial of per-axis
    degree at most ``2*order - 1``.
    """
    if int(m) != m or m < 0:
        raise InvalidArgumentError(f"truncation order must be >= 0, got {m!r}")
    if dim < 1 or dim > MAX_DIM:
        raise CapacityError(f"dim={dim} outside 1..{MAX_DIM}")
    if rule is None:
        rule = gauss_hermite_rule(default_rule_order(m))
    if rule.order < m + 1:
        raise AliasingError(
            f"quadrature order {rule.order} cannot resolve truncation order {m}; need >= {m + 1}")
    if rule.order ** dim > MAX_GRID_POINTS:
        raise CapacityError(f"tensor grid of {rule.order}^{dim} points is too large")

    vals = np.asarray(f(quadrature_nodes(rule, dim)), dtype=float).reshape(-1)
    if vals.size != rule.order ** dim:
        raise InvalidArgumentError(
            f"f returned {vals.size} values for {rule.order ** dim} grid points")
    if not np.all(np.isfinite(vals)):
        raise InvalidArgumentError("f returned non-finite values on the quadrature grid")

    basis = _hermite_table(m, rule.nodes) * rule.scaled_weights
    t = vals.reshape((rule.order,) * dim)
    for axis in range(dim):
        t = np.moveaxis(np.tensordot(basis, t, axes=(1, axis)), 0, axis)
    return TruncatedSeq(dim, m, t.reshape(-1))


def hermite_reconstruct(a: TruncatedSeq, x):
    """Partial sum ``sum_n a_n h_n(x)`` over the stored net-square."""
    pts, single = _points(x, a.dim)
    r = a.tensor()
    tabs = [_hermite_table(a.order, pts[:, axis]) for axis in range(a.dim)]
    # contract axis 0 first, keep the point axis in front
    r = np.tensordot(tabs[0].T, r, axes=(1, 0))
    for axis in range(1, a.dim):
        h = tabs[axis].T.reshape((pts.shape[0], a.order + 1) + (1,) * (a.dim - axis - 1))
        r = (r * h).sum(axis=1)
    return float(r[0]) if single else r


def basis_gram(rule: QuadratureRule, nmax: int) -> np.ndarray:
    """Quadrature approximation of ``<h_i, h_j>`` for ``i, j <= nmax``."""
    tab = _hermite_table(nmax, rule.nodes)
    return (tab * rule.scaled_weights) @ tab.T


__all__ = [
    "QuadratureRule", "gauss_hermite_rule", "default_rule_order", "hermite_eval",
    "hermite_eval_multi", "hermite_transform", "hermite_reconstruct", "quadrature_nodes",
    "basis_gram", "multi_indices",
]
