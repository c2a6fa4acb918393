"""Command-line experiment runner.

Every command reads a YAML or JSON config, writes its results into ``--out``
and finishes with ``manifest.json``, which records the configuration, the
master seed and a SHA-256 digest of every output file. Exit codes: 0 success,
1 configuration error, 2 refusal by a precondition gate, 3 internal error.

The master seed comes from ``--seed``, else the GAUSSCONJ_SEED environment
variable, else the config's ``seed`` key, else a fixed default.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .config import ExperimentConfig, load_config, parse_config
from .core import SEED_ENV_VAR, RandomStream, resolve_seed
from .errors import ConfigurationError, CovarianceNotPSDError, GaussConjError, RefusalError
from .extremes import (
    TailQuery,
    asymptotic_conjunction,
    asymptotic_nonstandard,
    asymptotic_order_stat,
    asymptotic_timechanged,
    conditional_excursion_sample,
    independence_identity,
    ks_critical_value,
    ks_exponential,
    ks_two_sample,
    limit_excursion_sample,
    mc_sup_tail,
    order_stat_tails,
    ratio_diagnostic,
    sandwich_bounds,
    sigma_terms,
    tail_sweep_csv,
)
from .gauss import FBMSampler, GridSpec, empirical_covariance, fbm_covariance, stationary_sampler
from .limit import EnsembleSpec, LimitVariant
from .parallel import JOB_STRIDE, job_base
from .pickands import certificate_holds, estimate_H, lower_bound_H, lower_bound_stderr
from .sojourn import berman_compare, estimate_B

logger = logging.getLogger("gaussconj")

EXIT_OK, EXIT_CONFIG, EXIT_REFUSED, EXIT_INTERNAL = 0, 1, 2, 3
MANIFEST = "manifest.json"
RESULT = "result.json"


@dataclass
class RunOutput:
    """Everything a command produces, keyed by file name."""

    result: dict
    tables: dict[str, str] = field(default_factory=dict)
    plots: dict[str, str] = field(default_factory=dict)
    jobs: list[dict] = field(default_factory=list)


class JobLedger:
    """Assigns job numbers in call order; each job owns a disjoint range of stream indices."""

    def __init__(self):
        self.entries: list[dict] = []

    def next(self, label: str) -> int:
        job = len(self.entries)
        self.entries.append({"label": label, "job": job, "first_stream": job_base(job), "stride": JOB_STRIDE})
        return job


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _table(header, rows) -> str:
    lines = [",".join(header)] + [",".join(_cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


# plot data, built from result dictionaries so that it can be regenerated from files


def plots_pickands(result: dict) -> dict[str, str]:
    rows = result["table"]["rows"]
    return {"H_vs_a.csv": _table(("a", "H_hat", "stderr_H"), [(r["a"], r["H_hat"], r["stderr_H"]) for r in rows])}


def plots_tail(result: dict) -> dict[str, str]:
    rows = []
    for rec in result["levels"]:
        if rec.get("ratio"):
            rows.append((rec["query"]["u"], rec["ratio"]["value"], rec["ratio"]["stderr"]))
    if not rows:
        return {}
    return {"ratio_vs_u.csv": _table(("u", "ratio", "ratio_err"), sorted(rows))}


def plots_sojourn(result: dict) -> dict[str, str]:
    out = {}
    for key, rep in (("", result["berman"]), ("_sensitivity", result.get("sensitivity"))):
        if rep is None:
            continue
        for u in sorted({r["u"] for r in rep["rows"]}):
            rows = [(r["x"], r["lhs"], r["B_hat"], r["lhs_err"], r["B_err"]) for r in rep["rows"] if r["u"] == u]
            out[f"berman_overlay{key}_u{u:g}.csv"] = _table(("x", "lhs", "B_hat", "lhs_err", "B_err"), sorted(rows))
    return out


PLOTTERS = {"pickands": plots_pickands, "tail": plots_tail, "sojourn": plots_sojourn}


# command runners


def _constant_from(cfg_tail, base: Path | None):
    if cfg_tail.H is not None:
        if isinstance(cfg_tail.H, float):
            return {"value": cfg_tail.H, "stderr": 0.0}
        return {"value": cfg_tail.H.value, "stderr": cfg_tail.H.stderr}
    if cfg_tail.H_file is None:
        return None
    path = Path(cfg_tail.H_file)
    if not path.is_absolute() and base is not None:
        path = base / path
    try:
        data = json.loads(path.read_text())
        ext = data["extrapolation"]
        return {"value": float(ext["value"]), "stderr": float(ext["stderr"])}
    except (OSError, KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read a constant from {path}: {exc}") from None


class _Const:
    def __init__(self, d):
        self.value = d["value"]
        self.stderr = d["stderr"]


def _asymptotic(spec: EnsembleSpec, variant: LimitVariant, T: float, u: float, H):
    if variant.tag == "order_stat":
        return asymptotic_order_stat(spec.n, variant.j, spec.alpha_min, T, u, H)
    if variant.tag == "time_changed":
        return asymptotic_timechanged(spec, T, u, H)
    if variant.tag == "nonstandard":
        return asymptotic_nonstandard(spec, T, u, H)
    return asymptotic_conjunction(spec, T, u, H)


def run_pickands(cfg: ExperimentConfig, seed: int, jobs: int, base: Path | None = None) -> RunOutput:
    blk = cfg.block("pickands")
    spec, variant = cfg.spec(), cfg.variant.build()
    ledger = JobLedger()
    kw = dict(a_values=blk.a, S=blk.S, seed=seed, jobs=jobs, epsilon=blk.epsilon, certify=blk.certify)
    est = estimate_H(spec, variant, replicas=blk.replicas, job=ledger.next("generalized"), power=blk.power, **kw)
    result = {"table": est.table.to_dict(), "extrapolation": est.to_dict()}
    if blk.lower_bound:
        classical = EnsembleSpec.build([spec.alpha_min])
        if spec == classical and variant.tag == "standard":
            est_c = est
        else:
            reps = blk.classical_replicas or blk.replicas
            est_c = estimate_H(classical, None, replicas=reps, job=ledger.next("classical"), power=blk.power, **kw)
        result["lower_bound"] = {
            "classical": est_c.to_dict(),
            "classical_table": est_c.table.to_dict(),
            "bound": lower_bound_H(spec, est_c),
            "bound_stderr": lower_bound_stderr(spec, est_c),
            "certificate_holds": certificate_holds(est, spec, est_c),
        }
    out = RunOutput(result, {"pickands_table.csv": est.table.to_csv()}, jobs=ledger.entries)
    out.plots = plots_pickands(result)
    return out


def run_tail(cfg: ExperimentConfig, seed: int, jobs: int, base: Path | None = None) -> RunOutput:
    blk = cfg.block("tail")
    spec, variant = cfg.spec(), cfg.variant.build()
    const = _constant_from(blk, base)
    ledger = JobLedger()
    records, sweep = [], []
    for idx, u in enumerate(blk.u):
        q = TailQuery(spec, variant, blk.T, u, blk.a, blk.replicas_for(idx))
        res = mc_sup_tail(q, seed, ledger.next(f"tail u={u:g}"), jobs, blk.max_halvings)
        rec = res.to_dict()
        if const is not None:
            asym = _asymptotic(spec, variant, blk.T, u, _Const(const))
            rat = ratio_diagnostic(res.estimate, asym)
            rec["asymptotic"] = asym.to_dict()
            rec["ratio"] = rat.to_dict()
            sweep.append((u, res.estimate, asym, rat))
        records.append(rec)
    result = {"levels": records, "constant": const}
    tables = {"tail_sweep.csv": tail_sweep_csv(sweep)} if sweep else {}
    tables["tail_estimates.csv"] = _table(
        ("u", "empirical", "stderr", "gate_passed", "step"),
        [(r["query"]["u"], r["estimate"]["mean"], r["estimate"]["stderr"], int(r["gate"]["passed"]), r["gate"]["fine"]["step"]) for r in records],
    )
    out = RunOutput(result, tables, jobs=ledger.entries)
    out.plots = plots_tail(result)
    return out


def run_order_stats(cfg: ExperimentConfig, seed: int, jobs: int, base: Path | None = None) -> RunOutput:
    blk = cfg.block("order-stats")
    spec = cfg.spec()
    ledger = JobLedger()
    tails = order_stat_tails(spec, blk.T, blk.u, blk.a, blk.replicas, seed, blk.halvings, ledger.next("order statistics"), jobs)
    ident = independence_identity(tails.single)
    s1, s2 = sigma_terms(tails.single)
    result = {
        "tails": tails.to_dict(),
        "independence": {
            "max_tail": tails.order[0].to_dict(),
            "identity": ident.to_dict(),
            "z": (tails.order[0].mean - ident.mean) / max(math.hypot(tails.order[0].stderr, ident.stderr), 1e-300),
        },
        "sigma": {"sigma1": s1, "sigma2_bound": s2, "leading_max": sum(e.mean for e in tails.single)},
    }
    rows = [(f"single_{i + 1}", e.mean, e.stderr) for i, e in enumerate(tails.single)]
    rows += [(f"leave_out_{i + 1}", e.mean, e.stderr) for i, e in enumerate(tails.leave_one_out)]
    rows += [(f"order_{j + 1}", e.mean, e.stderr) for j, e in enumerate(tails.order)]
    rows.append(("identity_max", ident.mean, ident.stderr))
    if spec.n >= 2:
        sw = sandwich_bounds(tails)
        result["sandwich"] = dict(sw.to_dict(), holds=sw.holds(), pathwise_violations=tails.upper_violations)
        rows += [("sandwich_lower", sw.lower, sw.lower_stderr), ("sandwich_upper", sw.upper, sw.upper_stderr)]
    return RunOutput(result, {"order_stats.csv": _table(("quantity", "mean", "stderr"), rows)}, jobs=ledger.entries)


def run_sojourn(cfg: ExperimentConfig, seed: int, jobs: int, base: Path | None = None) -> RunOutput:
    blk = cfg.block("sojourn")
    spec = cfg.spec()
    ledger = JobLedger()
    K = blk.K or int(math.ceil(30.0 / blk.a))
    B = estimate_B(spec, blk.a, K, blk.B_replicas, blk.x, seed, blk.epsilon, job=ledger.next("limit occupation"), jobs=jobs)
    offset = len(ledger.entries) - 1
    for u in blk.u:
        ledger.next(f"sojourn t={blk.t:g} u={u:g}")
    rep = berman_compare(spec, blk.t, blk.u, blk.x, blk.budgets(), a=blk.a, K=K, seed=seed, jobs=jobs, job_offset=offset, B=B)
    result = {"berman": rep.to_dict()}
    tables = {"berman.csv": rep.to_csv()}
    if blk.sensitivity_t is not None:
        t2 = blk.t * blk.sensitivity_t
        offset = len(ledger.entries) - 1
        for u in blk.u:
            ledger.next(f"sojourn t={t2:g} u={u:g}")
        rep2 = berman_compare(spec, t2, blk.u, blk.x, blk.budgets(), a=blk.a, K=K, seed=seed, jobs=jobs, job_offset=offset, B=B)
        result["sensitivity"] = rep2.to_dict()
        tables["berman_sensitivity.csv"] = rep2.to_csv()
    out = RunOutput(result, tables, jobs=ledger.entries)
    out.plots = plots_sojourn(result)
    return out


def run_limit_law(cfg: ExperimentConfig, seed: int, jobs: int, base: Path | None = None) -> RunOutput:
    blk = cfg.block("limit-law")
    spec, variant = cfg.spec(), cfg.variant.build()
    ledger = JobLedger()
    ref = limit_excursion_sample(spec, blk.times, blk.limit_replicas, seed, variant, job=ledger.next("limit process"))
    rows, records = [], []
    for u in blk.u:
        job = ledger.next(f"conditional u={u:g}")
        sample = conditional_excursion_sample(spec, u, blk.times, blk.accepted, seed, variant, blk.max_draws, job=job)
        for k, t in enumerate(blk.times):
            d2, p2 = ks_two_sample(sample[:, k], ref[:, k])
            rec = {"u": u, "t": t, "ks_limit": d2, "p_limit": p2, "accepted": int(sample.shape[0])}
            if t == 0:
                d1, p1 = ks_exponential(sample[:, k])
                rec.update(ks_exp=d1, p_exp=p1, critical_5pct=ks_critical_value(sample.shape[0]))
            records.append(rec)
            rows.append((u, t, d2, p2, rec.get("ks_exp", float("nan")), rec.get("p_exp", float("nan"))))
    result = {"records": records, "limit_replicas": blk.limit_replicas}
    table = _table(("u", "t", "ks_limit", "p_limit", "ks_exp", "p_exp"), rows)
    return RunOutput(result, {"limit_law.csv": table}, jobs=ledger.entries)


def run_validate_sampler(cfg: ExperimentConfig, seed: int, jobs: int, base: Path | None = None) -> RunOutput:
    blk = cfg.block("validate-sampler")
    ledger = JobLedger()
    grid = GridSpec.from_points(blk.t_max, blk.points)
    rows, checks = [], []
    if blk.kind == "fbm":
        cases = [(f"fbm alpha={a:g}", a) for a in blk.alpha]
    else:
        spec = cfg.spec()
        cases = [(f"{p.model.family} C={p.model.C:g} alpha={p.model.alpha:g}", p.model) for p in spec.processes]
    for label, obj in cases:
        rng = RandomStream(seed, job_base(ledger.next(label))).generator()
        if blk.kind == "fbm":
            paths = FBMSampler(obj, grid).sample(rng, blk.replicas)
            pairs = blk.pairs
            exact = [float(fbm_covariance(obj, grid.times[s], grid.times[t])) for s, t in pairs]
        else:
            paths = stationary_sampler(obj, grid).sample(rng, blk.replicas)
            pairs = [(0, k) for k in blk.lags]
            exact = [float(obj.correlation(k * grid.step)) for k in blk.lags]
        ests = empirical_covariance(paths, pairs)
        for (s, t), e, ex in zip(pairs, ests, exact):
            z = (e.mean - ex) / e.stderr if e.stderr > 0 else (0.0 if e.mean == ex else math.inf)
            ok = abs(z) <= blk.sigmas
            checks.append(ok)
            rows.append((label, int(s), int(t), e.mean, e.stderr, ex, z, bool(ok)))
    result = {
        "kind": blk.kind,
        "all_passed": all(checks),
        "checks": [dict(zip(("case", "s", "t", "empirical", "stderr", "exact", "z", "passed"), r)) for r in rows],
    }
    table = _table(("case", "s", "t", "empirical", "stderr", "exact", "z", "passed"), rows)
    return RunOutput(result, {"sampler_check.csv": table}, jobs=ledger.entries)


RUNNERS = {
    "pickands": run_pickands,
    "tail": run_tail,
    "order-stats": run_order_stats,
    "sojourn": run_sojourn,
    "limit-law": run_limit_law,
    "validate-sampler": run_validate_sampler,
}


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_outputs(out: RunOutput, out_dir: Path, fmt: str) -> dict[str, str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    if fmt in ("json", "both"):
        files[RESULT] = dumps(out.result)
    if fmt in ("csv", "both"):
        files.update(out.tables)
    files.update(out.plots)
    digests = {}
    for name in sorted(files):
        path = out_dir / name
        path.write_text(files[name])
        digests[name] = sha256(path)
    return digests


def execute(command: str, cfg: ExperimentConfig, seed: int, seed_source: str, out_dir: Path, jobs: int, fmt: str, config_path: str | None = None) -> dict:
    """Run one command and write its outputs and manifest; returns the manifest."""
    base = Path(config_path).parent if config_path else None
    start = time.perf_counter()
    out = RUNNERS[command](cfg, seed, jobs, base)
    digests = write_outputs(out, out_dir, fmt)
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "config_path": config_path,
        "master_seed": seed,
        "seed_source": seed_source,
        "seed_env_var": SEED_ENV_VAR,
        "seed_env_value": os.environ.get(SEED_ENV_VAR),
        "version": __version__,
        "backend": kernels.BACKEND,
        "workers": jobs,
        "format": fmt,
        "jobs": out.jobs,
        "outputs": digests,
        "wall_time_s": round(time.perf_counter() - start, 3),
    }
    (out_dir / MANIFEST).write_text(dumps(manifest))
    return manifest


# entry points


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gaussconj", description="Monte Carlo experiments on extremes of Gaussian conjunctions.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in RUNNERS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", required=True, help="YAML or JSON experiment file")
        sp.add_argument("--seed", type=int, default=None, help=f"master seed (overrides ${SEED_ENV_VAR} and the config)")
        sp.add_argument("--out", default="runs/" + name, help="output directory")
        sp.add_argument("--jobs", type=int, default=1, help="worker threads (does not affect results)")
        sp.add_argument("--format", choices=("json", "csv", "both"), default="both")
    pd = sub.add_parser("plot-data", help="regenerate plot-data files from a result directory")
    pd.add_argument("results", help="directory holding result.json and manifest.json")
    pd.add_argument("--out", default=None, help="output directory (default: the result directory)")
    rr = sub.add_parser("rerun-from-manifest", help="repeat a run and compare output digests")
    rr.add_argument("manifest")
    rr.add_argument("--out", default=None, help="output directory (default: <manifest dir>/rerun)")
    rr.add_argument("--jobs", type=int, default=None)
    return p


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.jobs < 1:
        raise ConfigurationError("--jobs must be >= 1")
    seed, source = resolve_seed(args.seed, cfg.seed)
    if not 0 <= seed < 2**64:
        raise ConfigurationError("the master seed must be a 64-bit unsigned integer")
    cfg.block(args.command)
    man = execute(args.command, cfg, seed, source, Path(args.out), args.jobs, args.format, args.config)
    print(f"wrote {len(man['outputs'])} files and {MANIFEST} to {args.out}")
    return EXIT_OK


def emit_plot_data(result_dir: Path, out_dir: Path | None = None) -> list[str]:
    """Write the plot-data files of a finished run; returns their names."""
    result_dir = Path(result_dir)
    try:
        manifest = json.loads((result_dir / MANIFEST).read_text())
        result = json.loads((result_dir / RESULT).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"missing or unreadable results in {result_dir}: {exc}") from None
    plotter = PLOTTERS.get(manifest.get("command"))
    if plotter is None:
        raise ConfigurationError(f"no plot data defined for command {manifest.get('command')!r}")
    files = plotter(result)
    out_dir = Path(out_dir or result_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_text(text)
    return sorted(files)


def _cmd_plot(args) -> int:
    names = emit_plot_data(Path(args.results), args.out and Path(args.out))
    print("\n".join(names))
    return EXIT_OK


def rerun_from_manifest(manifest_path: Path, out_dir: Path | None = None, jobs: int | None = None) -> tuple[bool, dict]:
    """Repeat a recorded run; returns whether every output is byte-identical, and the new manifest."""
    manifest_path = Path(manifest_path)
    try:
        old = json.loads(manifest_path.read_text())
        cfg = parse_config(old["config"])
        command, seed = old["command"], int(old["master_seed"])
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"unusable manifest {manifest_path}: {exc}") from None
    out_dir = Path(out_dir or manifest_path.parent / "rerun")
    new = execute(command, cfg, seed, "manifest", out_dir, jobs or old.get("workers", 1), old.get("format", "both"), old.get("config_path"))
    return new["outputs"] == old["outputs"], new


def _cmd_rerun(args) -> int:
    same, new = rerun_from_manifest(Path(args.manifest), args.out and Path(args.out), args.jobs)
    if same:
        print("all outputs byte-identical")
        return EXIT_OK
    print("outputs differ from the manifest", file=sys.stderr)
    return EXIT_INTERNAL


def _error_record(args, exc: Exception, code: int) -> None:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, RefusalError):
        record["advice"] = exc.advice
    out = getattr(args, "out", None)
    if out:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            (Path(out) / "error.json").write_text(dumps(record))
        except OSError:
            pass
    print(f"error: {exc}", file=sys.stderr)
    if record.get("advice"):
        print(f"advice: {json.dumps(_clean(record['advice']), sort_keys=True)}", file=sys.stderr)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handler = {"plot-data": _cmd_plot, "rerun-from-manifest": _cmd_rerun}.get(args.command, _cmd_run)
    try:
        return handler(args)
    except RefusalError as exc:
        _error_record(args, exc, EXIT_REFUSED)
        return EXIT_REFUSED
    except CovarianceNotPSDError as exc:
        _error_record(args, exc, EXIT_INTERNAL)
        return EXIT_INTERNAL
    except (ValueError, GaussConjError) as exc:
        _error_record(args, exc, EXIT_CONFIG)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        logger.exception("internal error")
        _error_record(args, exc, EXIT_INTERNAL)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
