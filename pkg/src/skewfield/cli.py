"""Command-line front end: simulate | fit | compare | generate.

Exit codes: 0 ok, 1 usage or invalid configuration, 2 non-convergence (or any
failed replicate in compare), 3 aborted fit, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import kurtosis as sample_kurtosis
from scipy.stats import skew as sample_skew

from . import __version__
from .configs import (
    default_experiment,
    gau_config_from_dict,
    resolve_layout,
    skt_configs_from_dict,
)
from .dataio import (
    make_provenance,
    read_dataset_csv,
    read_fit_report,
    read_layout_json,
    write_dataset_csv,
    write_fit_report,
    write_json,
    write_layout_json,
    write_trace_csv,
)
from .gaussian import GauParams, gau_fit, gau_simulate
from .mcem import fit as skt_fit
from .model import Dataset, SktParams, simulate
from .report import STATUS_ABORTED, STATUS_CONVERGED

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_CONVERGENCE = 2
EXIT_ABORTED = 3
EXIT_IO = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _child_seed(master: int, *key: int) -> int:
    return int(np.random.SeedSequence([int(master), *key]).generate_state(1, np.uint64)[0])


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _load_config(args) -> dict:
    cfg = default_experiment()
    if getattr(args, "config", None):
        cfg = _merge(cfg, json.loads(Path(args.config).read_text()))
    for name in ("seed", "T", "replicates"):
        val = getattr(args, name, None)
        if val is not None:
            cfg[name] = val
    return cfg


def _truth_params(cfg: dict):
    truth = cfg["truth"]
    if "regions" in truth:
        return SktParams.from_dict(truth)
    return GauParams.from_dict(truth)


def _simulate_truth(truth, layout, n_times: int, seed: int) -> Dataset:
    if isinstance(truth, SktParams):
        return simulate(truth, layout, n_times, seed)
    return gau_simulate(truth, layout, n_times, seed)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    layout = resolve_layout(cfg["layout"])
    truth = _truth_params(cfg)
    seed = int(cfg["seed"])
    data = _simulate_truth(truth, layout, int(cfg["T"]), seed)
    prov = make_provenance(seed, cfg)
    write_dataset_csv(out / "data.csv", data, prov)
    write_layout_json(out / "layout.json", layout, prov)
    write_json(out / "provenance.json", {**prov, "config": cfg})
    print(f"wrote {data.n_times} x {layout.n_sites} dataset to {out}")
    return EXIT_OK


def _fit_one(model: str, data: Dataset, cfg: dict, seed: int):
    if model == "skt":
        gibbs, em = skt_configs_from_dict(cfg.get("skt_fit", {}))
        gibbs.seed = seed
        return skt_fit(data, gibbs=gibbs, em=em)
    gau_cfg = gau_config_from_dict(cfg.get("gau_fit", {}))
    gau_cfg.seed = seed
    return gau_fit(data, cfg=gau_cfg)


def _fit_exit_code(status: str) -> int:
    if status == STATUS_CONVERGED:
        return EXIT_OK
    if status == STATUS_ABORTED:
        return EXIT_ABORTED
    return EXIT_NO_CONVERGENCE


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    layout = read_layout_json(args.layout)
    data = read_dataset_csv(args.data, layout)
    seed = int(cfg["seed"])
    report = _fit_one(args.model, data, cfg, seed)
    prov = make_provenance(seed, cfg)
    write_fit_report(out / f"fit_{args.model}.json", report, prov)
    write_trace_csv(out / f"trace_{args.model}.csv", report)
    print(
        f"{report.model} fit: status={report.status} loglik={report.loglik:.3f} "
        f"bic={report.bic:.3f} aic={report.aic:.3f}"
    )
    return _fit_exit_code(report.status)


def _run_replicate(cfg: dict, rep: int) -> dict:
    layout = resolve_layout(cfg["layout"])
    truth = _truth_params(cfg)
    master = int(cfg["seed"])
    sim_seed = _child_seed(master, 101, rep)
    row: dict = {"replicate": rep, "seed": sim_seed}
    try:
        data = _simulate_truth(truth, layout, int(cfg["T"]), sim_seed)
        skt_report = _fit_one("skt", data, cfg, _child_seed(master, 103, rep))
        gau_report = _fit_one("gau", data, cfg, _child_seed(master, 105, rep))
        row.update(
            status_skt=skt_report.status,
            status_gau=gau_report.status,
            loglik_skt=skt_report.loglik,
            loglik_gau=gau_report.loglik,
            k_skt=skt_report.n_params,
            k_gau=gau_report.n_params,
            bic_skt=skt_report.bic,
            bic_gau=gau_report.bic,
            aic_skt=skt_report.aic,
            aic_gau=gau_report.aic,
            error="",
        )
    except Exception as exc:  # record and keep going
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


_REPLICATE_COLUMNS = [
    "replicate",
    "seed",
    "status_skt",
    "status_gau",
    "loglik_skt",
    "loglik_gau",
    "k_skt",
    "k_gau",
    "bic_skt",
    "bic_gau",
    "aic_skt",
    "aic_gau",
    "error",
]


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    n_rep = int(cfg["replicates"])
    if n_rep < 1:
        raise ValueError("replicates must be >= 1")
    n_jobs = max(1, int(args.threads))
    if n_jobs > 1:
        rows = Parallel(n_jobs=n_jobs)(
            delayed(_run_replicate)(cfg, rep) for rep in range(n_rep)
        )
    else:
        rows = [_run_replicate(cfg, rep) for rep in range(n_rep)]
    rows = sorted(rows, key=lambda r: r["replicate"])

    lines = [",".join(_REPLICATE_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt_cell(row.get(c, "")) for c in _REPLICATE_COLUMNS))
    (out / "replicates.csv").write_text("\n".join(lines) + "\n")

    ok_rows = [r for r in rows if not r["error"]]
    failed = [r for r in rows if r["error"]]
    long_lines = ["replicate,criterion,model,value"]
    for r in ok_rows:
        for crit in ("bic", "aic"):
            for model in ("skt", "gau"):
                long_lines.append(f"{r['replicate']},{crit.upper()},{model.upper()},{r[f'{crit}_{model}']!r}")
    (out / "criteria_long.csv").write_text("\n".join(long_lines) + "\n")

    n_ok = len(ok_rows)
    bic_wins = sum(r["bic_skt"] < r["bic_gau"] for r in ok_rows)
    aic_wins = sum(r["aic_skt"] < r["aic_gau"] for r in ok_rows)
    summary = {
        "n_replicates": n_rep,
        "n_completed": n_ok,
        "n_failed": len(failed),
        "bic_win_fraction": bic_wins / n_ok if n_ok else None,
        "aic_win_fraction": aic_wins / n_ok if n_ok else None,
        "mean_bic_gap": (
            float(np.mean([r["bic_gau"] - r["bic_skt"] for r in ok_rows])) if n_ok else None
        ),
        "mean_aic_gap": (
            float(np.mean([r["aic_gau"] - r["aic_skt"] for r in ok_rows])) if n_ok else None
        ),
        "provenance": make_provenance(int(cfg["seed"]), cfg),
    }
    write_json(out / "summary.json", summary)
    print(
        f"compare: {n_ok}/{n_rep} replicates completed; "
        f"SKT wins BIC {bic_wins}/{n_ok}, AIC {aic_wins}/{n_ok}"
    )
    return EXIT_OK if not failed else EXIT_NO_CONVERGENCE


def cmd_generate(args) -> int:
    report = read_fit_report(args.report)
    layout = read_layout_json(args.layout)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = int(args.seed if args.seed is not None else report.seed)
    n_runs = int(args.runs)
    n_out = int(args.T if args.T is not None else 500)
    if report.model == "SKT":
        params = SktParams.from_dict(report.params)
        nus = [reg.nu for reg in params.regions]
        if any(nu <= 2.0 for nu in nus):
            print(
                "warning: some nu <= 2; variance summaries are unstable", file=sys.stderr
            )
    elif report.model == "GAU":
        params = GauParams.from_dict(report.params)
    else:
        raise ValueError(f"unrecognized model tag {report.model!r}")

    prov = make_provenance(seed, {"report": args.report, "T_out": n_out, "n_runs": n_runs})
    slices = layout.region_slices
    lines = ["run,kind,key,value"]
    for run in range(n_runs):
        run_seed = _child_seed(seed, 201, run)
        data = _simulate_truth(params, layout, n_out, run_seed)
        write_dataset_csv(out / f"run_{run:03d}.csv", data, prov)
        y = data.y
        means = y.mean(axis=0)
        sds = y.std(axis=0, ddof=1)
        skews = sample_skew(y, axis=0)
        kurts = sample_kurtosis(y, axis=0)
        for i, sid in enumerate(layout.site_ids):
            lines.append(f"{run},site_mean,{sid},{means[i]!r}")
            lines.append(f"{run},site_sd,{sid},{sds[i]!r}")
            lines.append(f"{run},site_skew,{sid},{skews[i]!r}")
            lines.append(f"{run},site_kurt,{sid},{kurts[i]!r}")
        region_means = np.column_stack([y[:, sl].mean(axis=1) for sl in slices])
        corr = np.corrcoef(region_means, rowvar=False)
        for a in range(layout.n_regions):
            for b in range(a + 1, layout.n_regions):
                lines.append(f"{run},region_corr,r{a}:r{b},{corr[a, b]!r}")
    (out / "generate_summary.csv").write_text("\n".join(lines) + "\n")
    write_json(out / "provenance.json", prov)
    print(f"generated {n_runs} runs of length {n_out} into {out}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="skewfield", description=__doc__)
    parser.add_argument("--version", action="version", version=f"skewfield {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="experiment config JSON (merged over defaults)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker processes")
        p.add_argument("--T", type=int, dest="T", help="number of time points")

    p_sim = sub.add_parser("simulate", help="simulate a dataset from the true parameters")
    add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit", help="fit a model to a dataset")
    add_common(p_fit)
    p_fit.add_argument("--model", choices=("skt", "gau"), required=True)
    p_fit.add_argument("--data", required=True, help="dataset CSV")
    p_fit.add_argument("--layout", required=True, help="layout JSON")
    p_fit.set_defaults(func=cmd_fit)

    p_cmp = sub.add_parser("compare", help="replicate simulate/fit/criteria study")
    add_common(p_cmp)
    p_cmp.add_argument("--replicates", type=int, help="number of replicates")
    p_cmp.set_defaults(func=cmd_compare)

    p_gen = sub.add_parser("generate", help="emit synthetic fields from a fit report")
    add_common(p_gen)
    p_gen.add_argument("--report", required=True, help="fit report JSON")
    p_gen.add_argument("--layout", required=True, help="layout JSON")
    p_gen.add_argument("--runs", type=int, default=1, help="number of synthetic runs")
    p_gen.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"skewfield: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"skewfield: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
