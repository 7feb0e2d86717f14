"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import json
import math
import time

import numpy as np
import pytest

from tempered.charfun import (
    EmpiricalCharFun, empirical_charfun, gaussian_tail_exact, gram_psd_check, minlos_tail_check,
    nu_charfun_exact, nu_gaussian_batch,
)
from tempered.cli import main
from tempered.fields import FieldSpec, escape_spec, gaussian_charfun_exact, sample_batch, truncated_white
from tempered.hermite import basis_gram, gauss_hermite_rule, hermite_reconstruct, hermite_transform
from tempered.levy import DISCONTINUITY_FLAG, default_bank, equivalence_experiment, indicator_limit
from tempered.rng import RandomStream
from tempered.seqspace import TruncatedSeq, dual_maximizer, dual_norm, norm_p, pairing, weights

SEED = 20240917


@pytest.fixture
def report(capsys):
    def emit(k, ok, elapsed, limit, detail):
        ok = bool(ok and elapsed < limit)
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} ({elapsed:.2f}s < {limit}s) {detail}")
        assert ok, detail
    return emit


def test_criterion_1_orthonormality_round_trip(report):
    t0 = time.perf_counter()
    rule = gauss_hermite_rule(64)
    orth = float(np.max(np.abs(basis_gram(rule, 20) - np.eye(21))))
    g = np.random.default_rng(SEED)
    rt = 0.0
    for dim in (1, 2):
        for _ in range(20):
            a = TruncatedSeq(dim, 5, g.standard_normal(6 ** dim))
            back = hermite_transform(lambda x: hermite_reconstruct(a, x), 5, rule, dim=dim)
            rt = max(rt, float(np.max(np.abs(back.values - a.values))))
    report(1, orth <= 1e-10 and rt <= 1e-9, time.perf_counter() - t0, 10,
           f"orthonormality err={orth:.2e} (<=1e-10), round-trip err={rt:.2e} (<=1e-9)")


def test_criterion_2_isometry(report):
    t0 = time.perf_counter()
    g = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(100):
        d, m, p = int(g.integers(1, 3)), int(g.integers(0, 9)), int(g.integers(0, 4))
        b = TruncatedSeq(d, m, g.standard_normal((m + 1) ** d))
        dn = dual_norm(b, p)
        a = dual_maximizer(b, p)
        worst = max(worst, abs(dn - norm_p(b, -p)), abs(pairing(b, a) - dn), abs(norm_p(a, p) - 1.0))
    report(2, worst <= 1e-12, time.perf_counter() - t0, 1, f"max identity error={worst:.2e} (<=1e-12)")


def test_criterion_3_minlos_tail(report):
    t0 = time.perf_counter()
    spec = FieldSpec.white(1, 64)
    batch = sample_batch(spec, RandomStream(SEED), 100_000)
    rep = minlos_tail_check(batch, 0, 1, [0.25, 0.5, 1.0], eps=0.0, c=0.5, z=3.0)
    rows_ok = all(r.lhs <= r.rhs + 3 * r.lhs_stderr for r in rep.rows)
    infinite = 1 - (math.sinh(math.pi) / math.pi) ** -0.5
    margin = infinite - gaussian_tail_exact(spec, 1, 1.0)  # modes n > 64 omitted by truncation
    row = rep.rows[-1]
    match = abs(row.lhs - infinite) <= 3 * row.lhs_stderr + margin
    detail = (f"rows pass={rows_ok}; LHS(1)={row.lhs:.5f} vs {infinite:.5f}, "
              f"|diff|={abs(row.lhs - infinite):.5f} <= 3se {3 * row.lhs_stderr:.5f} + truncation {margin:.5f}")
    report(3, rows_ok and match and 0 <= margin < 1e-2, time.perf_counter() - t0, 30, detail)


def test_criterion_4_nu_measure(report):
    t0 = time.perf_counter()
    m, sigma, q, n = 4, 1.5, 1.0, 100_000
    batch = nu_gaussian_batch(m, sigma, q, RandomStream(SEED), n)
    x = batch.values
    want = sigma ** 2 * weights(1, m, -2 * q)
    cov = np.cov(x, rowvar=False)
    # stderr of a sample covariance entry: sqrt((s_ii s_jj + s_ij^2) / (n-1))
    se = np.sqrt((np.outer(want, want) + np.diag(want ** 2)) / (n - 1))
    cov_ok = bool(np.all(np.abs(cov - np.diag(want)) <= 3 * se))
    g = np.random.default_rng(SEED)
    pts = [TruncatedSeq(1, m, g.standard_normal(m + 1)) for _ in range(5)]
    est = empirical_charfun(batch, pts).values
    exact = np.array([nu_charfun_exact(b, m, sigma, q) for b in pts])
    cf = float(np.max(np.abs(est - exact)))
    report(4, cov_ok and cf <= 3 / math.sqrt(n), time.perf_counter() - t0, 30,
           f"covariance within 3se={cov_ok}; charfun err={cf:.2e} (<= {3 / math.sqrt(n):.2e})")


def test_criterion_5_positive_definiteness(report):
    t0 = time.perf_counter()
    spec = FieldSpec.power_decay(1, 8, 1.0)
    g = np.random.default_rng(SEED)
    emp_ok, lows = 0, []
    for k in range(50):
        lf = EmpiricalCharFun(sample_batch(spec, RandomStream(SEED, k), 500))
        pts = [TruncatedSeq(1, 8, g.standard_normal(9)) for _ in range(20)]
        r = gram_psd_check(lf, pts, tol=1e-8)
        emp_ok += r.passed
        lows.append(r.min_eigenvalue)
    ex_ok = 0
    for _ in range(10):
        pts = [TruncatedSeq(1, 8, g.standard_normal(9)) for _ in range(20)]
        ex_ok += gram_psd_check(lambda a: gaussian_charfun_exact(spec, a), pts, tol=1e-10).passed
    report(5, emp_ok == 50 and ex_ok == 10, time.perf_counter() - t0, 10,
           f"empirical {emp_ok}/50 (min eig {min(lows):.2e}), exact {ex_ok}/10")


def test_criterion_6_levy_positive_control(report):
    t0 = time.perf_counter()
    specs = [truncated_white(1, 32, c) for c in (2, 4, 8, 16)]
    bank = default_bank(1, 32, RandomStream(SEED, 1))
    rep = equivalence_experiment(specs, FieldSpec.white(1, 32), bank, 10_000, RandomStream(SEED),
                                 kappa_grid=(1.0, 2.0, 5.0), labels=["2", "4", "8", "16"])
    gaps_ok = rep.gap_table.consistent
    ks = rep.ks[-1][bank.labels.index("e_0")]
    frac = min(float(t.fractions[list(t.kappas).index(5.0)]) for t in rep.tightness)
    detail = (f"gaps monotone & final within 3se+truncation={gaps_ok}; KS D={ks.statistic:.4f} "
              f"<= {ks.critical:.4f}: {ks.passed}; min tightness(kappa=5)={frac:.4f} (>=0.90)")
    report(6, gaps_ok and ks.passed and frac >= 0.90, time.perf_counter() - t0, 60, detail)


def test_criterion_7_levy_negative_control(report):
    t0 = time.perf_counter()
    n = 10_000
    specs = [escape_spec(1, 4, v) for v in (1.0, 10.0, 100.0)]
    bank = default_bank(1, 4, RandomStream(SEED, 1))
    rep = equivalence_experiment(specs, indicator_limit(0), bank, n, RandomStream(SEED),
                                 kappa_grid=(2.0, 5.0), labels=["1", "10", "100"])
    frac = float(rep.tightness[-1].fractions[0])
    oracle = math.erf(0.2 / math.sqrt(2))  # P(|g| <= 0.2)
    band = 3 * math.sqrt(oracle * (1 - oracle) / n)
    flagged = DISCONTINUITY_FLAG in rep.flags
    detail = (f"fraction(kappa=2, n=100)={frac:.4f} < 0.2, |frac - {oracle:.4f}|={abs(frac - oracle):.4f} "
              f"<= {band:.4f}; flag emitted={flagged}")
    report(7, frac < 0.2 and abs(frac - oracle) <= band and flagged, time.perf_counter() - t0, 30, detail)


def test_criterion_8_determinism(report, tmp_path, monkeypatch):
    t0 = time.perf_counter()
    configs = {
        "levy": {"sequence": {"kind": "truncated_white", "dim": 1, "order": 32, "cutoffs": [2, 4, 8, 16]},
                 "limit": {"dim": 1, "order": 32}, "N": 10_000},
        "minlos": {"spec": {"dim": 1, "order": 64}, "N": 20_000, "p": 0, "q": 1,
                   "sigma_grid": [0.25, 0.5, 1.0], "eps": 0.0, "c": 0.5},
    }
    same, compared = True, 0
    for exp, params in configs.items():
        path = tmp_path / f"{exp}.json"
        path.write_text(json.dumps({"experiment": exp, "seed": SEED, "output_dir": "unused",
                                    "parameters": params}))
        outs = []
        for threads in ("1", "4", "4"):
            out = tmp_path / f"{exp}-{threads}-{len(outs)}"
            monkeypatch.setenv("OUTPUT_DIR", str(out))
            assert main([exp, "--config", str(path), "--threads", threads]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
        compared += len(outs[0])
        same &= outs[0] == outs[1] == outs[2] and bool(outs[0])
    report(8, same, time.perf_counter() - t0, 60, f"{compared} CSV files byte-identical across threads 1/4: {same}")
