"""Diagnostics for convergence in distribution of generalized random fields.

A sequence of fields is compared with a limit through three observable
conditions, each on a finite surrogate:

* pointwise convergence of characteristic functionals on a test bank,
* convergence in law of the pairings ``<X_n, a>`` (one-sample KS),
* tightness, via the mass of the dual-norm balls ``{||b||_{-p-1} <= kappa}``.

A fourth probe estimates ``1 - Re L_n(a)`` on small spheres around 0 to tell
whether the pointwise limit can be continuous at 0.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np
from scipy.special import kolmogi, ndtr

from .charfun import CharFunEstimate, empirical_charfun
from .errors import InsufficientSampleError, InvalidArgumentError
from .fields import FieldSpec, batch_pairings, gaussian_charfun_exact, pairing_variance, sample_batch
from .rng import RandomStream
from .seqspace import (
    Samples, TruncatedSeq, as_batch, bank_matrix, batch_norm_p, multi_indices, weights,
)

# sup_{x >= 0} (1 - cos x) / (1 - exp(-x^2)), attained near x = 3.14094
BRIDGE_M = 2.0001036638116815

DISCONTINUITY_FLAG = "Lévy hypothesis violated: limit not continuous at 0"
NOT_TIGHT_FLAG = "tightness fails: mass escapes every probed ball"
DISAGREE_FLAG = "charfun convergence and pairing convergence disagree"

MIN_KS_SAMPLES = 100


@dataclass(frozen=True, eq=False)
class TestFunctionBank:
    """Finite set of test points standing in for "all a in S"."""

    __test__ = False  # not a pytest class

    points: tuple
    labels: tuple

    def __post_init__(self):
        pts = tuple(self.points)
        labels = tuple(str(s) for s in self.labels)
        if not pts:
            raise InvalidArgumentError("test bank is empty")
        if len(labels) != len(pts):
            raise InvalidArgumentError("one label per bank point is required")
        if len({a.dim for a in pts}) != 1:
            raise InvalidArgumentError("bank points must share one dimension")
        if len(set(pts)) != len(pts):
            raise InvalidArgumentError("bank points must be pairwise distinct")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.points[0].dim

    def same_as(self, points: Sequence[TruncatedSeq]) -> bool:
        return len(points) == len(self.points) and all(a == b for a, b in zip(points, self.points))

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "points": [a.to_dict() for a in self.points]}

    @classmethod
    def from_dict(cls, data: dict) -> "TestFunctionBank":
        return cls(tuple(TruncatedSeq.from_dict(p) for p in data["points"]), tuple(data["labels"]))


def default_bank(dim: int, order: int, rng: RandomStream, n_dense: int = 3) -> TestFunctionBank:
    """``{e_n : n in Gamma_2} + n_dense random vectors with |a_n| <= (1+n)^{-2} + {0}``."""
    points, labels = [], []
    for n in multi_indices(dim, min(2, order)):
        points.append(TruncatedSeq.unit(tuple(n), order))
        labels.append("e_" + "_".join(str(int(k)) for k in n))
    k = (order + 1) ** dim
    env = weights(dim, order, -2)
    for j in range(n_dense):
        u = 2.0 * rng.uniforms(k, offset=j * k) - 1.0
        points.append(TruncatedSeq(dim, order, u * env))
        labels.append(f"dense_{j}")
    points.append(TruncatedSeq.zeros(dim, order))
    labels.append("zero")
    return TestFunctionBank(tuple(points), tuple(labels))


@dataclass
class GapTable:
    """``|L_hat_n(a) - L(a)|`` per (sequence index, bank point)."""

    gaps: np.ndarray
    stderr: np.ndarray
    allowance: np.ndarray
    final_ok: np.ndarray
    monotone: np.ndarray

    @property
    def consistent(self) -> bool:
        return bool(np.all(self.final_ok) and np.all(self.monotone))


def pointwise_convergence_test(estimates: Sequence[CharFunEstimate],
                               limit: Callable[[TruncatedSeq], complex],
                               allowance: Union[float, Sequence[float]] = 0.0,
                               z: float = 3.0, noise: float = 2.0) -> GapTable:
    """Gap table plus the verdict "consistent with convergence".

    Per bank point: the last gap must be ``<= z * stderr + allowance`` and the
    gaps non-increasing up to ``noise * (se_k + se_{k+1})``.
    """
    estimates = list(estimates)
    if not estimates:
        raise InvalidArgumentError("no estimates given")
    bank = estimates[0].bank
    for est in estimates[1:]:
        if len(est.bank) != len(bank) or any(a != b for a, b in zip(est.bank, bank)):
            raise InvalidArgumentError("all estimates must share one test bank")
    lim = np.array([complex(limit(a)) for a in bank])
    vals = np.stack([e.values for e in estimates])
    se = np.stack([e.stderr for e in estimates])
    gaps = np.abs(vals - lim)
    allow = np.broadcast_to(np.asarray(allowance, dtype=float), (len(bank),)).copy()
    final_ok = gaps[-1] <= z * se[-1] + allow
    if len(estimates) > 1:
        monotone = np.all(np.diff(gaps, axis=0) <= noise * (se[1:] + se[:-1]), axis=0)
    else:
        monotone = np.ones(len(bank), dtype=bool)
    return GapTable(gaps, se, allow, final_ok, monotone)


class KSResult(NamedTuple):
    statistic: float
    critical: float
    passed: bool


def ks_statistic(samples, reference_cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """``sup_x |F_N(x) - F(x)|`` for a continuous reference CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    f = np.asarray(reference_cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_pairing_test(samples_n, reference_cdf: Callable[[np.ndarray], np.ndarray],
                    alpha: float = 0.01) -> KSResult:
    """One-sample KS test with the asymptotic critical value ``K_alpha / sqrt(N)``."""
    samples_n = np.asarray(samples_n, dtype=float).reshape(-1)
    n = samples_n.size
    if n < MIN_KS_SAMPLES:
        raise InsufficientSampleError(f"KS test needs N >= {MIN_KS_SAMPLES}, got {n}")
    if not 0 < alpha < 1:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha!r}")
    d = ks_statistic(samples_n, reference_cdf)
    crit = float(kolmogi(alpha)) / math.sqrt(n)
    return KSResult(d, crit, d <= crit)


def normal_cdf(variance: float) -> Callable[[np.ndarray], np.ndarray]:
    sd = math.sqrt(variance)
    return lambda x: ndtr(np.asarray(x) / sd)


@dataclass
class TightnessTable:
    p: int
    kappas: np.ndarray
    fractions: np.ndarray
    stderr: np.ndarray
    sample_count: int


def tightness_probe(samples: Samples, p: int, kappa_grid: Sequence[float]) -> TightnessTable:
    """Fraction of samples inside ``{||b||_{-p-1} <= kappa}`` for each kappa."""
    kappas = np.asarray(kappa_grid, dtype=float)
    if kappas.size == 0 or np.any(kappas <= 0) or np.any(np.diff(kappas) <= 0):
        raise InvalidArgumentError("kappa_grid must be positive and strictly increasing")
    batch = as_batch(samples)
    norms = np.sort(batch_norm_p(batch.values, batch.dim, batch.order, -p - 1))
    n = len(batch)
    frac = np.searchsorted(norms, kappas, side="right") / n
    return TightnessTable(int(p), kappas, frac, np.sqrt(frac * (1 - frac) / n), n)


def default_directions(dim: int, order: int, count: int) -> list[TruncatedSeq]:
    """``a_k = 2^{-k} e_{n(k)}`` with ``n(k)`` cycling through the net-square in lex order."""
    idx = multi_indices(dim, order)
    return [2.0 ** -k * TruncatedSeq.unit(tuple(idx[k % len(idx)]), order) for k in range(count)]


def q_functional(b: TruncatedSeq, directions: Sequence[TruncatedSeq], k0: int = 0) -> float:
    """``Q(b) = sum_{k >= k0} <b, a_k>^2`` over the given (truncated) directions."""
    if not 0 <= k0 <= len(directions):
        raise InvalidArgumentError(f"k0={k0} outside 0..{len(directions)}")
    dirs = list(directions)[k0:]
    if not dirs:
        return 0.0
    m = max(b.order, max(a.order for a in dirs))
    pairs = bank_matrix(dirs, b.dim, m) @ b.resize(m).values
    return float(np.sum(pairs ** 2))


def q_tail_bound(lead: float, ratio: float, count: int) -> float:
    """Tail ``sum_{k >= count} <b, a_k>^2`` when ``|<b, a_k>| <= lead * ratio^k``."""
    if not 0 <= ratio < 1:
        raise InvalidArgumentError("ratio must lie in [0, 1)")
    return lead ** 2 * ratio ** (2 * count) / (1 - ratio ** 2)


def u_functional(b: TruncatedSeq, directions: Sequence[TruncatedSeq], k0: int = 0) -> float:
    """``U(b) = exp(-Q(b))``; positive-definite, ``U(0) = 1``."""
    return math.exp(-q_functional(b, directions, k0))


@dataclass
class ContinuityTable:
    """``max_a (1 - Re L_hat_n(a))`` over probes on ``||a||_p = delta`` spheres."""

    p: int
    deltas: np.ndarray
    deficits: np.ndarray  # (sequence, delta)
    stderr: np.ndarray


def _probe_points(dim: int, order: int, p: int, deltas, rng: RandomStream, count: int) -> list:
    k = (order + 1) ** dim
    dirs = [TruncatedSeq.unit(tuple(n), order).values for n in multi_indices(dim, min(1, order))]
    raw = np.vstack([np.array(dirs), rng.normals(count * k).reshape(count, k)])
    unit = raw / batch_norm_p(raw, dim, order, p)[:, None]
    return [[TruncatedSeq(dim, order, row * d) for row in unit] for d in deltas]


@dataclass
class ConvergenceReport:
    sequence_labels: list[str]
    bank: TestFunctionBank
    limit_values: np.ndarray
    charfun: list[CharFunEstimate]
    gap_table: GapTable
    exact_gaps: np.ndarray | None
    ks: list[list[KSResult | None]] | None
    ks_alpha: float
    tightness: list[TightnessTable]
    continuity: ContinuityTable
    verdicts: dict
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        if np.any(self.gap_table.gaps < 0):
            raise InvalidArgumentError("negative gap")
        for t in self.tightness:
            if np.any((t.fractions < 0) | (t.fractions > 1)):
                raise InvalidArgumentError("tightness fraction outside [0, 1]")

    def to_dict(self) -> dict:
        out = {
            "sequence": self.sequence_labels,
            "bank": list(self.bank.labels),
            "verdicts": self.verdicts,
            "flags": self.flags,
            "ks_alpha": self.ks_alpha,
            "charfun": [
                {"label": lab, "gaps": self.gap_table.gaps[i].tolist(),
                 "stderr": self.gap_table.stderr[i].tolist(),
                 "values": [[float(v.real), float(v.imag)] for v in est.values]}
                for i, (lab, est) in enumerate(zip(self.sequence_labels, self.charfun))
            ],
            "tightness": [
                {"label": lab, "p": t.p, "kappas": t.kappas.tolist(),
                 "fractions": t.fractions.tolist(), "stderr": t.stderr.tolist()}
                for lab, t in zip(self.sequence_labels, self.tightness)
            ],
            "continuity": {"p": self.continuity.p, "deltas": self.continuity.deltas.tolist(),
                           "deficits": self.continuity.deficits.tolist(),
                           "stderr": self.continuity.stderr.tolist()},
        }
        if self.exact_gaps is not None:
            out["exact_gaps"] = self.exact_gaps.tolist()
        if self.ks is not None:
            out["ks"] = [[None if r is None else {"statistic": r.statistic, "critical": r.critical,
                                                  "pass": r.passed} for r in row] for row in self.ks]
        return out

    def csv_tables(self) -> dict[str, str]:
        """Long-format CSV text per table (17 significant digits, LF endings)."""
        tables = {}
        rows = [["seq_index", "seq_label", "bank_label", "re", "im", "limit_re", "limit_im",
                 "gap", "stderr", "exact_gap"]]
        for i, (lab, est) in enumerate(zip(self.sequence_labels, self.charfun)):
            for k, blab in enumerate(self.bank.labels):
                exact = "" if self.exact_gaps is None else self.exact_gaps[i, k]
                rows.append([i, lab, blab, est.values[k].real, est.values[k].imag,
                             self.limit_values[k].real, self.limit_values[k].imag,
                             self.gap_table.gaps[i, k], self.gap_table.stderr[i, k], exact])
        tables["charfun"] = rows
        rows = [["seq_index", "seq_label", "p", "kappa", "fraction", "stderr"]]
        for i, (lab, t) in enumerate(zip(self.sequence_labels, self.tightness)):
            for kap, fr, se in zip(t.kappas, t.fractions, t.stderr):
                rows.append([i, lab, t.p, kap, fr, se])
        tables["tightness"] = rows
        rows = [["seq_index", "seq_label", "bank_label", "statistic", "critical", "pass"]]
        for i, (lab, row) in enumerate(zip(self.sequence_labels, self.ks or [])):
            for blab, r in zip(self.bank.labels, row):
                if r is not None:
                    rows.append([i, lab, blab, r.statistic, r.critical, int(r.passed)])
        tables["ks"] = rows  # header only when the limit has no Gaussian pairing law
        rows = [["seq_index", "seq_label", "p", "delta", "deficit", "stderr"]]
        c = self.continuity
        for i, lab in enumerate(self.sequence_labels):
            for j, d in enumerate(c.deltas):
                rows.append([i, lab, c.p, d, c.deficits[i, j], c.stderr[i, j]])
        tables["continuity"] = rows
        return {name: format_csv(rows) for name, rows in tables.items()}


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def format_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def equivalence_experiment(field_sequence: Sequence[FieldSpec],
                           limit: Union[FieldSpec, Callable[[TruncatedSeq], complex]],
                           bank: TestFunctionBank, n: int, rng: RandomStream, *,
                           p: int = 0, kappa_grid: Sequence[float] = (1.0, 2.0, 5.0, 10.0),
                           alpha: float = 0.01, tight_eps: float = 0.1,
                           delta_grid: Sequence[float] = (0.5, 0.25, 0.1, 0.05),
                           eps_target: float = 0.05, probe_count: int = 8,
                           labels: Sequence[str] | None = None, threads: int = 1) -> ConvergenceReport:
    """Run charfun convergence, pairing convergence and tightness side by side.

    ``limit`` is either a Gaussian ``FieldSpec`` (exact charfun and pairing
    laws available) or a bare functional, in which case the KS leg is skipped.
    Sequence element ``i`` is sampled from ``rng.derive(i)``.
    """
    specs = list(field_sequence)
    if not specs:
        raise InvalidArgumentError("empty field sequence")
    dim = bank.dim
    if any(s.dim != dim for s in specs) or (isinstance(limit, FieldSpec) and limit.dim != dim):
        raise InvalidArgumentError("field sequence, limit and bank must share one dimension")
    labels = [f"n{i}" for i in range(len(specs))] if labels is None else list(labels)
    limit_fn = (lambda a: gaussian_charfun_exact(limit, a)) if isinstance(limit, FieldSpec) else limit
    lim_vals = np.array([complex(limit_fn(a)) for a in bank.points])

    probe_order = max(a.order for a in bank.points)
    deltas = np.sort(np.asarray(delta_grid, dtype=float))[::-1]
    probes = _probe_points(dim, probe_order, p, deltas, rng.derive(1 << 32), probe_count)

    estimates, tight, ks_rows = [], [], []
    deficits = np.zeros((len(specs), deltas.size))
    def_se = np.zeros_like(deficits)
    for i, spec in enumerate(specs):
        samples = sample_batch(spec, rng.derive(i), n, threads=threads)
        estimates.append(empirical_charfun(samples, bank.points))
        tight.append(tightness_probe(samples, p, kappa_grid))
        for j, pts in enumerate(probes):
            est = empirical_charfun(samples, pts)
            worst = int(np.argmax(1.0 - est.values.real))
            deficits[i, j] = 1.0 - est.values[worst].real
            def_se[i, j] = est.stderr_re[worst]
        if isinstance(limit, FieldSpec):
            row = []
            for a in bank.points:
                var = pairing_variance(limit, a)
                row.append(ks_pairing_test(batch_pairings(samples, a), normal_cdf(var), alpha)
                           if var > 0 else None)
            ks_rows.append(row)

    exact_gaps = None
    allowance = 0.0
    if isinstance(limit, FieldSpec):
        exact_gaps = np.array([[abs(gaussian_charfun_exact(s, a) - lv)
                                for a, lv in zip(bank.points, lim_vals)] for s in specs])
        allowance = exact_gaps[-1]
    gap_table = pointwise_convergence_test(estimates, limit_fn, allowance)

    verdicts: dict = {"charfun_converges": gap_table.consistent}
    if ks_rows:
        tested = [r for r in ks_rows[-1] if r is not None]
        # Bonferroni over the bank for the family verdict
        crit = float(kolmogi(alpha / max(1, len(tested)))) / math.sqrt(n)
        verdicts["pairings_converge"] = all(r.statistic <= crit for r in tested)
        verdicts["pairings_all_pass_at_alpha"] = all(r.passed for r in tested)
    else:
        verdicts["pairings_converge"] = None

    largest = np.array([t.fractions[-1] for t in tight])
    verdicts["tight"] = bool(largest.min() >= 1.0 - tight_eps)
    verdicts["min_fraction_at_largest_kappa"] = float(largest.min())

    small = deficits[:, -1]
    growing = small[-1] - small[0] > 3.0 * math.hypot(def_se[-1, -1], def_se[0, -1])
    verdicts["limit_continuous_at_0"] = not (small[-1] > eps_target and growing)

    flags = []
    if not verdicts["limit_continuous_at_0"]:
        flags.append(DISCONTINUITY_FLAG)
    if not verdicts["tight"]:
        flags.append(NOT_TIGHT_FLAG)
    if verdicts["pairings_converge"] is not None and verdicts["pairings_converge"] != verdicts["charfun_converges"]:
        flags.append(DISAGREE_FLAG)

    return ConvergenceReport(labels, bank, lim_vals, estimates, gap_table, exact_gaps,
                             ks_rows or None, alpha, tight,
                             ContinuityTable(p, deltas, deficits, def_se), verdicts, flags)


def indicator_limit(mode=0) -> Callable[[TruncatedSeq], complex]:
    """The functional ``a -> 1 if a_mode == 0 else 0`` (discontinuous at 0)."""
    def fn(a: TruncatedSeq) -> complex:
        idx = (mode,) * a.dim if isinstance(mode, int) else mode
        return 1.0 + 0j if a[idx] == 0 else 0j
    return fn


def report_json(report: ConvergenceReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
