"""Command-line front end: ``msjlab simulate | analyze | compare | stability``.

Every subcommand reads an optional JSON experiment file and lets flags
override its fields.  Output goes to ``--out``, else ``$MSJLAB_OUT``, else
``./msjlab-out``.  Exit codes: 0 success, 1 configuration error, 2 compare
tolerance exceeded.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from msjlab.analysis import MsfqParams, analyze_msfq, stability_general, stability_one_or_all
from msjlab.errors import ConfigurationError, InstabilityError
from msjlab.metrics import aggregate, result_rows, write_results
from msjlab.policy import PolicyConfig
from msjlab.simulator import assumption_violations, run, write_run_metadata
from msjlab.workload import WorkloadSpec, load_workload, workload_from_dict

MODES = ("simulate", "analyze", "compare", "stability")
OUT_ENV = "MSJLAB_OUT"

DEFAULT_WORKLOAD = {"k": 32, "classes": [{"need": 1, "fraction": 0.9, "mean_size": 1.0},
                                         {"need": 32, "fraction": 0.1, "mean_size": 1.0}]}


@dataclass
class ExperimentConfig:
    """One experiment: workload, policies, arrival-rate sweep and run settings.

    ``workload`` is an inline class table or a path to a JSON/CSV file.
    ``lambdas`` may be empty, meaning the workload's own rates (a no-op for
    fraction tables).  ``ells`` lists extra MSFQ thresholds for analyze and
    compare.
    """

    mode: str = "simulate"
    workload: dict | str = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_WORKLOAD)))
    policies: list[PolicyConfig] = field(default_factory=list)
    lambdas: list[float] = field(default_factory=list)
    ells: list[int] = field(default_factory=list)
    horizon: float = 1e5
    warmup: float | None = None
    seeds: list[int] = field(default_factory=lambda: [1])
    out: str | None = None
    series: bool = False
    series_every: int = 1
    save_jobs: bool = False
    tolerance: float = 0.10
    workers: int = 1

    def validate(self) -> ExperimentConfig:
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if not self.horizon > 0:
            raise ConfigurationError("horizon must be positive")
        if self.warmup is not None and not 0 <= self.warmup < self.horizon:
            raise ConfigurationError("warmup must lie in [0, horizon)")
        if any(not (lam >= 0 and math.isfinite(lam)) for lam in self.lambdas):
            raise ConfigurationError("arrival rates must be finite and nonnegative")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if not self.tolerance > 0:
            raise ConfigurationError("tolerance must be positive")
        return self

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "workload": self.workload,
            "policies": [p.to_dict() for p in self.policies],
            "sweep": {"lambda": list(self.lambdas)}, "ells": list(self.ells),
            "horizon": self.horizon, "warmup": self.warmup, "seeds": list(self.seeds),
            "out": self.out, "series": self.series, "series_every": self.series_every,
            "save_jobs": self.save_jobs, "tolerance": self.tolerance, "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> ExperimentConfig:
        if not isinstance(doc, dict):
            raise ConfigurationError("experiment config must be a JSON object")
        known = set(cls.__dataclass_fields__) | {"sweep"}
        extra = set(doc) - known - {"lambdas"}
        if extra:
            raise ConfigurationError(f"unknown config fields {sorted(extra)}")
        kw = {k: v for k, v in doc.items() if k in cls.__dataclass_fields__}
        kw["policies"] = [PolicyConfig.from_dict(p) for p in doc.get("policies", [])]
        if "sweep" in doc:
            kw["lambdas"] = _parse_sweep(doc["sweep"])
        try:
            kw["lambdas"] = [float(x) for x in kw.get("lambdas", [])]
            kw["ells"] = [int(x) for x in kw.get("ells", [])]
            kw["seeds"] = [int(x) for x in kw.get("seeds", [1])]
            if "horizon" in kw:
                kw["horizon"] = float(kw["horizon"])
            if kw.get("warmup") is not None:
                kw["warmup"] = float(kw["warmup"])
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"malformed config value ({exc})") from exc
        return cls(**kw).validate()


def _parse_sweep(sweep) -> list[float]:
    if isinstance(sweep, list):
        return [float(x) for x in sweep]
    if not isinstance(sweep, dict):
        raise ConfigurationError("sweep must be a list or an object")
    if "lambda" in sweep:
        return [float(x) for x in sweep["lambda"]]
    if {"start", "stop", "num"} <= set(sweep):
        return [float(x) for x in np.linspace(sweep["start"], sweep["stop"], int(sweep["num"]))]
    raise ConfigurationError("sweep needs 'lambda' values or start/stop/num")


def _base_workload(cfg: ExperimentConfig) -> WorkloadSpec | dict:
    if isinstance(cfg.workload, str):
        path = Path(cfg.workload)
        if path.suffix.lower() == ".json":
            try:
                return json.loads(path.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigurationError(f"cannot read workload {path}: {exc}") from exc
        return load_workload(path, total_rate=1.0)
    return cfg.workload


def workload_at(cfg: ExperimentConfig, lam: float | None) -> WorkloadSpec:
    """The experiment's workload scaled to total arrival rate ``lam``."""
    base = _base_workload(cfg)
    if isinstance(base, WorkloadSpec):
        return base if lam is None else base.scaled(lam)
    uses_fractions = any("fraction" in c for c in base.get("classes", []))
    if lam is None and uses_fractions and base.get("total_rate") is None:
        raise ConfigurationError("a fraction table needs a --lambda sweep")
    return workload_from_dict(base, total_rate=lam, source="workload")


def _lambdas(cfg: ExperimentConfig) -> list[float | None]:
    return list(cfg.lambdas) if cfg.lambdas else [None]


def _policies(cfg: ExperimentConfig, spec: WorkloadSpec) -> list[PolicyConfig]:
    if cfg.policies:
        return cfg.policies
    if spec.is_one_or_all:
        return [PolicyConfig("msfq", spec.k - 1)]
    return [PolicyConfig("msf")]


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out or os.environ.get(OUT_ENV) or "msjlab-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


# simulate -------------------------------------------------------------------

def _sim_cell(args):
    cfg, policy, lam, seed, run_dir = args
    spec = workload_at(cfg, lam)
    log = run(spec, policy, cfg.horizon, cfg.warmup, seed, record_series=cfg.series,
              series_every=cfg.series_every)
    stats = aggregate(log)
    if run_dir is not None:
        log.to_csv(run_dir, series=cfg.series, jobs=cfg.save_jobs)
        write_run_metadata(log, Path(run_dir) / "run.json")
    rows = result_rows(stats, policy.label, spec.total_rate, seed)
    return (policy.label, spec.total_rate, seed), rows


def _map(fn, cells, workers: int):
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def cmd_simulate(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg)
    cells = []
    for lam in _lambdas(cfg):
        try:
            spec = workload_at(cfg, lam)
        except ConfigurationError:
            if lam is None:
                print("empty sweep: nothing to simulate", file=sys.stderr)
                write_results([], out / "results.csv")
                return 0
            raise
        for policy in _policies(cfg, spec):
            for seed in cfg.seeds:
                name = f"{policy.label}_lam{spec.total_rate:g}_seed{seed}".replace("(", "").replace(")", "")
                cells.append((cfg, policy, lam, seed, str(out / "runs" / name)))
    results = _map(_sim_cell, cells, cfg.workers)
    results.sort(key=lambda r: r[0])
    rows = [row for _, rs in results for row in rs]
    write_results(rows, out / "results.csv")
    for row in rows:
        if row["class"] in ("E[T]", "E[T^w]"):
            print(f"{row['policy']:>24s}  lambda={row['lambda']:<8g} seed={row['seed']:<4d} "
                  f"{row['class']:<7s} {row['mean_T']:.6g} ± {row['ci']:.3g}")
    return 0


# analyze --------------------------------------------------------------------

ANALYSIS_FIELDS = ["lambda", "ell", "label", "feasible", "E_T", "E_T_small", "E_T_large",
                   "E_T_weighted", "fraction_p1", "fraction_p2", "fraction_p3", "fraction_p4",
                   "diagnostics"]


def _ells(cfg: ExperimentConfig, spec: WorkloadSpec) -> list[int]:
    ells = list(cfg.ells)
    for p in cfg.policies:
        if p.kind == "msfq":
            ells.append(p.ell)
        elif p.kind == "msf":
            ells.append(0)
        else:
            raise ConfigurationError(f"analysis covers msfq and msf only, not {p.kind}")
    if not ells:
        ells = [spec.k - 1]
    return sorted(set(ells))


def _analysis_row(spec: WorkloadSpec, ell: int) -> tuple[dict, dict | None]:
    row = {"lambda": spec.total_rate, "ell": ell, "label": "msf" if ell == 0 else f"msfq({ell})"}
    params = MsfqParams.from_workload(spec, ell)
    if not stability_one_or_all(params).stable:
        row.update(feasible=False, diagnostics="unstable")
        return row, None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = analyze_msfq(params)
    except InstabilityError as exc:
        row.update(feasible=False, diagnostics=str(exc))
        return row, None
    row.update(feasible=True, E_T=res.mean_response, E_T_small=res.mean_response_small,
               E_T_large=res.mean_response_large, E_T_weighted=res.weighted_response,
               **{f"fraction_p{i + 1}": f for i, f in enumerate(res.fractions)},
               diagnostics="; ".join(res.diagnostics))
    return row, res.to_dict()


def _one_or_all(cfg: ExperimentConfig, lam) -> WorkloadSpec:
    spec = workload_at(cfg, lam)
    if not spec.is_one_or_all:
        raise ConfigurationError(f"{cfg.mode} needs a one-or-all workload, got needs {spec.needs}")
    return spec


def _write_csv(path: Path, fields: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v)
                        for k, v in row.items() if k in fields})


def cmd_analyze(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg)
    rows, docs = [], []
    for lam in _lambdas(cfg):
        spec = _one_or_all(cfg, lam)
        for ell in _ells(cfg, spec):
            row, doc = _analysis_row(spec, ell)
            rows.append(row)
            docs.append({"lambda": spec.total_rate, "ell": ell, "feasible": row["feasible"],
                         "result": doc})
            status = (f"E[T]={row['E_T']:.6g}  E[T^w]={row['E_T_weighted']:.6g}"
                      if row["feasible"] else "infeasible")
            print(f"lambda={spec.total_rate:<8g} {row['label']:>10s}  {status}")
    _write_csv(out / "analysis.csv", ANALYSIS_FIELDS, rows)
    (out / "analysis.json").write_text(json.dumps(docs, indent=2, allow_nan=False))
    return 0


# compare --------------------------------------------------------------------

COMPARE_FIELDS = ["lambda", "ell", "label", "analytic_E_T", "sim_E_T", "sim_ci", "rel_error",
                  "within_tolerance", "completions", "p1_no_large", "p2_under_k_small"]


def _compare_cell(args):
    cfg, lam, ell, seed = args
    spec = _one_or_all(cfg, lam)
    policy = PolicyConfig("msf") if ell == 0 else PolicyConfig("msfq", ell)
    log = run(spec, policy, cfg.horizon, cfg.warmup, seed)
    return (lam, ell, seed), aggregate(log), assumption_violations(log)


def cmd_compare(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg)
    cells, analytic = [], {}
    for lam in _lambdas(cfg):
        spec = _one_or_all(cfg, lam)
        for ell in _ells(cfg, spec):
            row, _ = _analysis_row(spec, ell)
            analytic[(lam, ell)] = row
            if row["feasible"]:
                cells.extend((cfg, lam, ell, s) for s in cfg.seeds)
    sims = {}
    for key, stats, viol in sorted(_map(_compare_cell, cells, cfg.workers), key=lambda r: r[0]):
        sims.setdefault(key[:2], []).append((stats, viol))
    rows, ok = [], True
    for (lam, ell), arow in analytic.items():
        row = {"lambda": arow["lambda"], "ell": ell, "label": arow["label"],
               "analytic_E_T": arow.get("E_T", math.nan)}
        runs = sims.get((lam, ell), [])
        if runs:
            means = np.array([s.mean for s, _ in runs])
            sim = float(means.mean())
            ci = runs[0][0].ci if len(runs) == 1 else float(
                1.96 * means.std(ddof=1) / math.sqrt(len(means)))
            rel = abs(row["analytic_E_T"] - sim) / sim
            passed = bool(rel <= cfg.tolerance)
            ok &= passed
            row.update(sim_E_T=sim, sim_ci=ci, rel_error=rel, within_tolerance=passed,
                       completions=int(sum(s.count for s, _ in runs)),
                       p1_no_large=float(np.mean([v.get("P1_no_large", 0.0) for _, v in runs])),
                       p2_under_k_small=float(np.mean([v.get("P2_under_k_small", 0.0)
                                                       for _, v in runs])))
            print(f"lambda={row['lambda']:<8g} {row['label']:>10s}  analytic={row['analytic_E_T']:.6g}"
                  f"  sim={sim:.6g} ± {ci:.3g}  rel_err={rel:.3%}  {'PASS' if passed else 'FAIL'}")
        else:
            row.update(within_tolerance=False)
            print(f"lambda={row['lambda']:<8g} {row['label']:>10s}  infeasible")
        rows.append(row)
    _write_csv(out / "compare.csv", COMPARE_FIELDS, rows)
    verdict = "PASS" if ok else "FAIL"
    print(f"summary: {verdict} at tolerance {cfg.tolerance:.1%}")
    return 0 if ok else 2


# stability ------------------------------------------------------------------

STABILITY_FIELDS = ["lambda", "one_or_all_stable", "sufficient_stable", "necessary_unstable"]


def _bound(x: float) -> str:
    return "unbounded" if math.isinf(x) else f"{x:.6g}"


def cmd_stability(cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg)
    lams = cfg.lambdas
    base = workload_at(cfg, lams[0] if lams else (1.0 if _needs_rate(cfg) else None))
    general = stability_general(base)
    lines = [f"k={base.k} needs={list(base.needs)}"]
    one_or_all = None
    if base.is_one_or_all:
        one_or_all = stability_one_or_all(MsfqParams.from_workload(base, 0))
        lines.append(f"one-or-all boundary: lambda < {_bound(one_or_all.boundary)}")
    lines.append(f"static quickswap sufficient boundary: lambda < {_bound(general.sufficient_boundary)}")
    lines.append(f"no policy stable at or beyond: lambda >= {_bound(general.necessary_boundary)}")
    rows = []
    for lam in lams:
        spec = workload_at(cfg, lam)
        g = stability_general(spec)
        row = {"lambda": spec.total_rate, "sufficient_stable": g.sufficient_stable,
               "necessary_unstable": g.necessary_unstable, "one_or_all_stable": ""}
        if spec.is_one_or_all:
            row["one_or_all_stable"] = stability_one_or_all(MsfqParams.from_workload(spec, 0)).stable
        rows.append(row)
        lines.append(f"lambda={spec.total_rate:<8g} sufficient_stable={g.sufficient_stable} "
                     f"necessary_unstable={g.necessary_unstable}")
    print("\n".join(lines))
    _write_csv(out / "stability.csv", STABILITY_FIELDS, rows)
    doc = {"k": base.k, "needs": list(base.needs),
           "one_or_all_boundary": None if one_or_all is None else _json_num(one_or_all.boundary),
           "sufficient_boundary": _json_num(general.sufficient_boundary),
           "necessary_boundary": _json_num(general.necessary_boundary)}
    (out / "stability.json").write_text(json.dumps(doc, indent=2))
    return 0


def _needs_rate(cfg) -> bool:
    base = _base_workload(cfg)
    if isinstance(base, WorkloadSpec):
        return False
    return any("fraction" in c for c in base.get("classes", [])) and base.get("total_rate") is None


def _json_num(x: float):
    return "unbounded" if math.isinf(x) else x


# entry point ----------------------------------------------------------------

COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "compare": cmd_compare,
            "stability": cmd_stability}


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msjlab", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", help="JSON experiment file")
        p.add_argument("--workload", help="workload file (JSON or CSV)")
        p.add_argument("--lambda", dest="lambdas", type=_floats,
                       help="comma-separated total arrival rates")
        p.add_argument("--policy", dest="policies", action="append",
                       help="policy, e.g. msf or msfq:31 (repeatable)")
        p.add_argument("--ell", dest="ells", type=_ints, help="comma-separated MSFQ thresholds")
        p.add_argument("--seed", dest="seeds", type=_ints, help="comma-separated seeds")
        p.add_argument("--horizon", type=float)
        p.add_argument("--warmup", type=float)
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./msjlab-out)")
        p.add_argument("--workers", type=int)
        p.add_argument("--series", action="store_true", default=None,
                       help="record n(t) series (simulate)")
        p.add_argument("--tolerance", type=float, help="relative tolerance (compare)")
        p.add_argument("--echo-config", action="store_true",
                       help="print the resolved config as JSON and exit")
    return parser


def _parse_policy(text: str, ells: list[int] | None) -> PolicyConfig:
    kind, _, ell = text.partition(":")
    try:
        if ell:
            return PolicyConfig(kind.strip(), int(ell))
        if kind.strip() == "msfq" and ells:
            return PolicyConfig("msfq", ells[0])
        return PolicyConfig(kind.strip())
    except ValueError as exc:
        raise ConfigurationError(f"bad policy {text!r}: {exc}") from exc


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    doc = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
    cfg = ExperimentConfig.from_dict(doc)
    updates = {"mode": args.mode}
    if args.workload:
        updates["workload"] = args.workload
    if args.policies:
        updates["policies"] = [_parse_policy(p, args.ells) for p in args.policies]
    for name in ("lambdas", "ells", "seeds", "horizon", "warmup", "out", "workers",
                 "series", "tolerance"):
        value = getattr(args, name)
        if value is not None:
            updates[name] = value
    if args.ells is not None and cfg.policies and "policies" not in updates:
        updates["policies"] = [replace(p, ell=args.ells[0]) if p.kind in ("msfq", "static_quickswap")
                               else p for p in cfg.policies]
    return replace(cfg, **updates).validate()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # usage errors are configuration errors; exit code 2 is reserved for compare
        return 0 if exc.code in (0, None) else 1
    try:
        cfg = resolve_config(args)
        if args.echo_config:
            print(json.dumps(cfg.to_dict(), indent=2))
            return 0
        return COMMANDS[cfg.mode](cfg)
    except ConfigurationError as exc:
        print(f"msjlab: configuration error: {exc}", file=sys.stderr)
        return 1
    except InstabilityError as exc:
        print(f"msjlab: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
