"""Batch experiment runner.

Usage::

    tempered <experiment> --config cfg.json [--seed S] [--assert] [--threads N]
    tempered validate --config cfg.json

Configs are JSON objects ``{"experiment", "seed", "output_dir", "parameters"}``.
The only environment override is ``OUTPUT_DIR``.  Exit codes: 0 success,
1 configuration error, 2 numerical capacity error, 3 ``--assert`` failure.
"""

from __future__ import annotations

import argparse
import fcntl
import hashlib
import json
import math
import os
import platform
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from . import __version__
from .charfun import (
    EmpiricalCharFun, empirical_charfun, gaussian_tail_exact, gram_psd_check, minlos_tail_check,
)
from .errors import CapacityError, TemperedError
from .fields import FieldSpec, escape_spec, gaussian_charfun_exact, sample_batch, truncated_white
from .hermite import (
    default_rule_order, gauss_hermite_rule, hermite_eval_multi, hermite_reconstruct, hermite_transform,
)
from .levy import (
    DISCONTINUITY_FLAG, TestFunctionBank, default_bank, equivalence_experiment, format_csv,
    indicator_limit, report_json,
)
from .rng import RandomStream
from .seqspace import (
    LAYOUT, MAX_DIM, TruncatedSeq, load_coefficients, multi_indices, norm_p,
)

EXPERIMENTS = ("transform", "sample", "charfun", "minlos", "levy")
TOP_KEYS = {"experiment", "seed", "output_dir", "parameters"}
EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_ASSERT = 0, 1, 2, 3


class ConfigError(TemperedError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    parameters: dict
    seed: int
    output_dir: Path
    source: bytes
    base_dir: Path

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.source).hexdigest()


# ---------------------------------------------------------------- validation

def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check_spec(data, where: str, diags: list[str]) -> None:
    if not isinstance(data, dict):
        diags.append(f"{where}: field spec must be an object")
        return
    try:
        FieldSpec.from_dict(data)
    except (TemperedError, ValueError, TypeError) as exc:
        diags.append(f"{where}: {exc}")


def _check_bank(params: dict, base: Path, diags: list[str]) -> None:
    bank = params.get("bank", "default")
    if bank == "default":
        return
    if not isinstance(bank, dict) or not isinstance(bank.get("files"), list) or not bank["files"]:
        diags.append('bank must be "default" or {"files": [...], "labels": [...]}')
        return
    labels = bank.get("labels")
    if labels is not None and len(labels) != len(bank["files"]):
        diags.append("bank.labels must have one entry per file")
    for f in bank["files"]:
        path = base / f
        if not path.is_file():
            diags.append(f"bank file {f!r} does not exist")
            continue
        try:
            load_coefficients(path)
        except (TemperedError, ValueError, OSError) as exc:
            diags.append(f"bank file {f!r} does not parse: {exc}")


def _check_count(params: dict, diags: list[str]) -> None:
    n = params.get("N")
    if n is None:
        diags.append("parameters.N (sample_count) is required")
    elif not _is_int(n) or n < 1:
        diags.append("sample_count must be ≥ 1")


def _check_grid(params: dict, key: str, diags: list[str], increasing: bool = False) -> None:
    g = params.get(key)
    if g is None:
        return
    if not isinstance(g, list) or not g or not all(_is_num(v) and v > 0 for v in g):
        diags.append(f"{key} must be a non-empty list of positive numbers")
    elif increasing and any(b <= a for a, b in zip(g, g[1:])):
        diags.append(f"{key} must be strictly increasing")


def _validate_parameters(exp: str, params: dict, base: Path) -> list[str]:
    diags: list[str] = []
    if exp == "transform":
        dim, order = params.get("dim", 1), params.get("order")
        if not _is_int(dim) or not 1 <= dim <= MAX_DIM:
            diags.append(f"dim must be an integer in 1..{MAX_DIM}")
        if not _is_int(order) or order < 0:
            diags.append("order must be a nonnegative integer")
        qo = params.get("quad_order")
        if qo is not None and _is_int(order) and (not _is_int(qo) or qo < order + 1):
            diags.append("quad_order must be >= order + 1 (aliasing)")
        fn = params.get("function")
        if not isinstance(fn, dict) or fn.get("kind") not in ("hermite", "gaussian", "x_gaussian", "coefficients"):
            diags.append('function.kind must be one of "hermite", "gaussian", "x_gaussian", "coefficients"')
        elif fn["kind"] == "hermite":
            idx = fn.get("index")
            if not isinstance(idx, list) or len(idx) != dim or not all(_is_int(k) and k >= 0 for k in idx):
                diags.append("function.index must list one nonnegative integer per dimension")
        elif fn["kind"] == "coefficients":
            f = fn.get("file")
            if not isinstance(f, str) or not (base / f).is_file():
                diags.append(f"coefficient file {f!r} does not exist")
            else:
                try:
                    load_coefficients(base / f)
                except (TemperedError, ValueError) as exc:
                    diags.append(f"coefficient file {f!r} does not parse: {exc}")
        return diags

    if exp in ("sample", "charfun", "minlos"):
        _check_count(params, diags)
        if "spec" not in params:
            diags.append("parameters.spec is required")
        else:
            _check_spec(params["spec"], "spec", diags)
    if exp == "charfun":
        _check_bank(params, base, diags)
    if exp == "minlos":
        p, q = params.get("p"), params.get("q")
        if not _is_int(p) or not _is_int(q):
            diags.append("p and q must be integers")
        elif q <= p:
            diags.append(f"q must exceed p: zeta(2(q-p)) diverges for q={q} <= p={p}")
        if "sigma_grid" not in params:
            diags.append("sigma_grid is required")
        _check_grid(params, "sigma_grid", diags)
        for key in ("eps", "c"):
            if not _is_num(params.get(key)) or params[key] < 0:
                diags.append(f"{key} must be a number >= 0")
    if exp == "levy":
        _check_count(params, diags)
        seq = params.get("sequence")
        if not isinstance(seq, dict) or seq.get("kind") not in ("truncated_white", "escape", "specs"):
            diags.append('sequence.kind must be one of "truncated_white", "escape", "specs"')
        else:
            kind = seq["kind"]
            key = {"truncated_white": "cutoffs", "escape": "variances", "specs": "specs"}[kind]
            if not isinstance(seq.get(key), list) or not seq[key]:
                diags.append(f"sequence.{key} must be a non-empty list")
            elif kind == "specs":
                for i, s in enumerate(seq["specs"]):
                    _check_spec(s, f"sequence.specs[{i}]", diags)
            elif kind != "specs":
                for k in ("dim", "order"):
                    if not _is_int(seq.get(k)) or seq[k] < (1 if k == "dim" else 0):
                        diags.append(f"sequence.{k} must be a valid integer")
        lim = params.get("limit")
        if lim != "indicator":
            _check_spec(lim, "limit", diags)
        _check_grid(params, "kappa_grid", diags, increasing=True)
        _check_grid(params, "delta_grid", diags)
        alpha = params.get("alpha", 0.01)
        if not _is_num(alpha) or not 0 < alpha < 1:
            diags.append("alpha must lie in (0, 1)")
        if params.get("N", 0) and _is_int(params.get("N")) and params["N"] < 100:
            diags.append("levy experiments need N >= 100 for the KS leg")
        _check_bank(params, base, diags)
    return diags


def validate_config(data: Any, base: Path, experiment: str | None = None) -> list[str]:
    """Every violation in a parsed config; an empty list means clean."""
    if not isinstance(data, dict):
        return ["config must be a JSON object"]
    diags = [f"unknown top-level key {k!r}" for k in sorted(set(data) - TOP_KEYS)]
    exp = data.get("experiment", experiment)
    if exp not in EXPERIMENTS:
        diags.append(f"experiment must be one of {', '.join(EXPERIMENTS)}")
    elif experiment is not None and exp != experiment:
        diags.append(f"config is for experiment {exp!r}, not {experiment!r}")
    seed = data.get("seed")
    if seed is None:
        diags.append("seed is required (no wall-clock default)")
    elif not _is_int(seed) or not 0 <= seed < 2 ** 64:
        diags.append("seed must be an unsigned 64-bit integer")
    if "output_dir" not in data and "OUTPUT_DIR" not in os.environ:
        diags.append("output_dir is required")
    elif "output_dir" in data and not isinstance(data["output_dir"], str):
        diags.append("output_dir must be a string")
    params = data.get("parameters", {})
    if not isinstance(params, dict):
        diags.append("parameters must be an object")
    elif exp in EXPERIMENTS:
        diags.extend(_validate_parameters(exp, params, base))
    return diags


def load_config(path, experiment: str | None = None,
                seed_override: int | None = None) -> tuple[ExperimentConfig | None, list[str]]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        return None, [f"cannot read {path}: {exc}"]
    try:
        data = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        return None, [f"{path}: not valid JSON ({exc})"]
    if isinstance(data, dict) and seed_override is not None:
        data = dict(data, seed=seed_override)
    diags = validate_config(data, path.parent, experiment)
    if diags:
        return None, diags
    out = os.environ.get("OUTPUT_DIR") or data["output_dir"]
    out_path = Path(out)
    if not out_path.is_absolute():
        out_path = path.parent / out_path
    return ExperimentConfig(data.get("experiment", experiment), data.get("parameters", {}),
                            int(data["seed"]), out_path, raw, path.parent), []


# ---------------------------------------------------------------- experiments

def _load_bank(params: dict, cfg: ExperimentConfig, dim: int, order: int) -> TestFunctionBank:
    bank = params.get("bank", "default")
    if bank == "default":
        return default_bank(dim, order, RandomStream(cfg.seed, 1 << 40))
    points = [load_coefficients(cfg.base_dir / f) for f in bank["files"]]
    labels = bank.get("labels") or [Path(f).stem for f in bank["files"]]
    return TestFunctionBank(tuple(points), tuple(labels))


def _run_transform(cfg: ExperimentConfig, threads: int) -> tuple[dict[str, str], bool]:
    p = cfg.parameters
    dim, order = p.get("dim", 1), p["order"]
    rule = gauss_hermite_rule(p.get("quad_order") or default_rule_order(order))
    fn = p["function"]
    if fn["kind"] == "hermite":
        f = lambda x: hermite_eval_multi(tuple(fn["index"]), x)
    elif fn["kind"] == "gaussian":
        f = lambda x: np.exp(-0.5 * np.sum(x ** 2, axis=1))
    elif fn["kind"] == "x_gaussian":
        f = lambda x: x[:, 0] * np.exp(-0.5 * np.sum(x ** 2, axis=1))
    else:
        src = load_coefficients(cfg.base_dir / fn["file"])
        f = lambda x: hermite_reconstruct(src, x)
    a = hermite_transform(f, order, rule, dim=dim)
    rows = [[f"n{i}" for i in range(dim)] + ["value"]]
    for n, v in zip(multi_indices(dim, order), a.values):
        rows.append([int(k) for k in n] + [float(v)])
    summary = {"dim": dim, "order": order, "quad_order": rule.order,
               "norms": {str(q): norm_p(a, q) for q in range(4)}}
    files = {"coefficients.json": json.dumps(a.to_dict()) + "\n",
             "transform.csv": format_csv(rows),
             "report.json": json.dumps(summary, indent=2, sort_keys=True) + "\n"}
    return files, True


def _run_sample(cfg: ExperimentConfig, threads: int) -> tuple[dict[str, str], bool]:
    p = cfg.parameters
    spec = FieldSpec.from_dict(p["spec"])
    stream_id = int(p.get("stream_id", 0))
    batch = sample_batch(spec, RandomStream(cfg.seed, stream_id), p["N"], threads=threads)
    lines = [json.dumps({"dim": batch.dim, "order": batch.order, "layout": LAYOUT,
                         "values": row.tolist()}) for row in batch.values]
    var = spec.variances()
    mean = batch.values.mean(axis=0)
    emp = batch.values.var(axis=0, ddof=1) if len(batch) > 1 else np.zeros_like(mean)
    rows = [[f"n{i}" for i in range(spec.dim)] + ["mean", "variance", "expected_variance"]]
    for n, mu, v, ev in zip(multi_indices(spec.dim, spec.order), mean, emp, var):
        rows.append([int(k) for k in n] + [float(mu), float(v), float(ev)])
    manifest = {"seed": cfg.seed, "stream_id_range": [stream_id, stream_id], "N": p["N"],
                "spec": spec.to_dict()}
    return {"samples.jsonl": "\n".join(lines) + "\n", "moments.csv": format_csv(rows),
            "samples_manifest.json": json.dumps(manifest, indent=2, sort_keys=True) + "\n"}, True


def _run_charfun(cfg: ExperimentConfig, threads: int) -> tuple[dict[str, str], bool]:
    p = cfg.parameters
    spec = FieldSpec.from_dict(p["spec"])
    bank = _load_bank(p, cfg, spec.dim, spec.order)
    batch = sample_batch(spec, RandomStream(cfg.seed, 0), p["N"], threads=threads)
    est = empirical_charfun(batch, bank.points)
    exact = np.array([gaussian_charfun_exact(spec, a) for a in bank.points])
    gaps = np.abs(est.values - exact)
    ok = bool(np.all(gaps <= 3 * est.stderr + 1e-15))
    psd = gram_psd_check(EmpiricalCharFun(batch), bank.points, tol=1e-8)
    rows = [["label", "re", "im", "stderr_re", "stderr_im", "exact_re", "gap"]]
    for lab, v, sr, si, ex, g in zip(bank.labels, est.values, est.stderr_re, est.stderr_im, exact, gaps):
        rows.append([lab, float(v.real), float(v.imag), float(sr), float(si), float(ex.real), float(g)])
    summary = {"N": p["N"], "bank": list(bank.labels), "within_3_stderr": ok,
               "psd": {"pass": bool(psd.passed), "min_eigenvalue": psd.min_eigenvalue},
               "estimate": est.to_dict()}
    return {"charfun.csv": format_csv(rows),
            "charfun.json": json.dumps(summary, indent=2, sort_keys=True) + "\n"}, ok and psd.passed


def _run_minlos(cfg: ExperimentConfig, threads: int) -> tuple[dict[str, str], bool]:
    p = cfg.parameters
    spec = FieldSpec.from_dict(p["spec"])
    batch = sample_batch(spec, RandomStream(cfg.seed, 0), p["N"], threads=threads)
    rep = minlos_tail_check(batch, p["p"], p["q"], p["sigma_grid"], p["eps"], p["c"],
                            z=p.get("z", 3.0))
    rows = [["sigma", "lhs", "lhs_stderr", "rhs", "pass", "exact_lhs"]]
    for r in rep.rows:
        rows.append([r.sigma, r.lhs, r.lhs_stderr, r.rhs, int(r.passed),
                     gaussian_tail_exact(spec, p["q"], r.sigma)])
    return {"minlos.csv": format_csv(rows),
            "minlos.json": json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n"}, rep.passed


def _levy_sequence(seq: dict) -> tuple[list[FieldSpec], list[str]]:
    kind = seq["kind"]
    if kind == "truncated_white":
        return ([truncated_white(seq["dim"], seq["order"], c) for c in seq["cutoffs"]],
                [f"cutoff={c}" for c in seq["cutoffs"]])
    if kind == "escape":
        return ([escape_spec(seq["dim"], seq["order"], v) for v in seq["variances"]],
                [f"variance={v}" for v in seq["variances"]])
    specs = [FieldSpec.from_dict(s) for s in seq["specs"]]
    return specs, [f"spec{i}" for i in range(len(specs))]


def _run_levy(cfg: ExperimentConfig, threads: int) -> tuple[dict[str, str], bool]:
    p = cfg.parameters
    specs, labels = _levy_sequence(p["sequence"])
    limit = indicator_limit(0) if p["limit"] == "indicator" else FieldSpec.from_dict(p["limit"])
    order = limit.order if isinstance(limit, FieldSpec) else max(s.order for s in specs)
    bank = _load_bank(p, cfg, specs[0].dim, order)
    kw = {k: p[k] for k in ("p", "kappa_grid", "alpha", "delta_grid", "eps_target", "probe_count") if k in p}
    rep = equivalence_experiment(specs, limit, bank, p["N"], RandomStream(cfg.seed, 0),
                                 labels=labels, threads=threads, **kw)
    files = {f"{name}.csv": text for name, text in rep.csv_tables().items()}
    files["report.json"] = report_json(rep)
    if p.get("expect_violation"):
        ok = DISCONTINUITY_FLAG in rep.flags
    else:
        ok = not rep.flags and all(v is not False for v in rep.verdicts.values())
    return files, ok


RUNNERS = {"transform": _run_transform, "sample": _run_sample, "charfun": _run_charfun,
           "minlos": _run_minlos, "levy": _run_levy}


def _manifest(cfg: ExperimentConfig, files: dict[str, str]) -> str:
    return json.dumps({
        "experiment": cfg.experiment,
        "config_sha256": cfg.digest,
        "seed": cfg.seed,
        "versions": {"tempered": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "files": {name: hashlib.sha256(text.encode()).hexdigest() for name, text in sorted(files.items())},
    }, indent=2, sort_keys=True) + "\n"


def run(cfg: ExperimentConfig, threads: int = 1) -> tuple[dict[str, str], bool]:
    """Execute an experiment and write its artifacts; returns (files, verdict)."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    with open(cfg.output_dir / ".lock", "w") as lock:
        try:
            fcntl.flock(lock, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError as exc:
            raise ConfigError(f"{cfg.output_dir} is in use by another experiment") from exc
        files, ok = RUNNERS[cfg.experiment](cfg, threads)
        files["manifest.json"] = _manifest(cfg, files)
        for name, text in files.items():
            with open(cfg.output_dir / name, "w", newline="\n") as fh:
                fh.write(text)
    return files, ok


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tempered", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--assert", dest="assert_", action="store_true",
                        help="exit 3 when the experiment's statistical verdict fails")
        sp.add_argument("--threads", type=int, default=1)
    sp = sub.add_parser("validate", help="check a config without running it")
    sp.add_argument("config_path", nargs="?")
    sp.add_argument("--config", dest="config_flag")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "validate":
        path = args.config_flag or args.config_path
        if path is None:
            print("error: validate needs a config path", file=sys.stderr)
            return EXIT_CONFIG
        _, diags = load_config(path)
        for d in diags:
            print(d)
        return EXIT_CONFIG if diags else EXIT_OK

    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    cfg, diags = load_config(args.config, args.command, args.seed)
    if diags:
        for d in diags:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        files, ok = run(cfg, threads=args.threads)
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except TemperedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{cfg.experiment}: wrote {len(files)} files to {cfg.output_dir}"
          + ("" if ok else " (verdict: FAIL)"))
    if args.assert_ and not ok:
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
