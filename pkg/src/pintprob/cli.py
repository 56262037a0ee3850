"""Experiment runner: solver dispatch, sweep plans, CSV/JSON artifacts.

Single runs go through ``pint-prob <algorithm> --system <id> [flags]``;
multi-run sweeps through ``pint-prob plan <file.ini>``.  Every run leaves
a ``record_<id>.json`` (iteration history, ensembles thinned unless
--dump-ensembles) and a ``metrics_<id>.csv`` scored against the
sequential fine trajectory; a plan adds ``summary.csv`` and a MANIFEST.
CSV bodies carry a schema tag in their first column so downstream readers
can refuse files they do not understand.

Plan runs execute on a thread pool capped by PINTPROB_WORKERS, but all
files are written from the submitting thread in plan order, so the
artifacts are byte-identical at any worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from configparser import ConfigParser
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from pintprob import diagnostics, metrics, nngp, pint, probpint, systems
from pintprob.core import (
    CorrectionDataset,
    IterationRecord,
    RunConfig,
    RunRecord,
    TimeMesh,
    worker_count,
)

METRICS_SCHEMA = "metrics-v1"
SUMMARY_SCHEMA = "summary-v1"
FILL_SCHEMA = "fill-v1"
RECORD_SCHEMA = "record-v1"

_DET_ALGOS = ("parareal", "gparareal", "nngparareal")
_PROB_ALGOS = ("prob-gparareal", "prob-nngparareal")
ALGORITHMS = _DET_ALGOS + _PROB_ALGOS

METRICS_COLUMNS = [
    "schema", "run_id", "system", "algorithm", "k", "i",
    "ES", "VS", "MAD", "MSE", "Bias", "stddev_max", "L",
    "wall_ms", "termination",
]
SUMMARY_COLUMNS = [
    "schema", "run_id", "group", "kind", "system", "algorithm", "seed",
    "K_end", "K_conv", "termination",
    "ES", "VS", "MAD", "MSE", "Bias", "wall_s",
]


def run_algorithm(algorithm, system, config):
    """Dispatch one run.  The algorithm name wins over the neighbor flag:
    plain gparareal ignores it, the nn variants fill in the default."""
    if algorithm in ("nngparareal", "prob-nngparareal"):
        if config.neighbor_count is None:
            config = replace(config, neighbor_count=nngp.DEFAULT_NEIGHBORS)
    elif config.neighbor_count is not None:
        config = replace(config, neighbor_count=None)
    if algorithm == "parareal":
        return pint.parareal_run(system, config)
    if algorithm in ("gparareal", "nngparareal"):
        return pint.gparareal_run(system, config)
    if algorithm in _PROB_ALGOS:
        return probpint.prob_run(system, config)
    raise ValueError(f"unknown algorithm {algorithm!r}, have {ALGORITHMS}")


# -- metrics and summary tables ------------------------------------------


def metrics_rows(run_id, record, truth):
    """Score every (iteration, knot) of a run against the fine trajectory.

    The metrics table is the numerical artifact: it must be byte-identical
    across repeated runs at any worker count, so the wall_ms column is a
    fixed placeholder.  Measured times live in the record JSON (per
    iteration) and in summary.csv (per run)."""
    rows = []
    for rec in record.iterations:
        for i in range(1, record.mesh.N + 1):
            ev = metrics.evaluate_ensemble(rec.ensembles[i], truth[i])
            row = {
                "schema": METRICS_SCHEMA,
                "run_id": run_id,
                "system": record.config.system_id,
                "algorithm": record.algorithm,
                "k": rec.k,
                "i": i,
                "stddev_max": float(rec.stddevs[i].max()),
                "L": rec.L,
                "wall_ms": 0.0,
                "termination": record.termination,
            }
            row.update(ev.as_dict())
            rows.append(row)
    return rows


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        w.writerows(rows)


def _read_csv(path, schema):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        if row.get("schema") != schema:
            raise ValueError(
                f"{path}: expected schema {schema!r}, found {row.get('schema')!r}"
            )
    return rows


def summary_rows(per_run):
    """Per-run summary lines plus mean/std aggregates per plan group.

    ``per_run`` is a list of dicts with group, run_id, config fields and
    the time-averaged scores of the final iteration.  Aggregates use the
    sample standard deviation and leave non-numeric columns blank.
    """
    rows = []
    groups = {}
    for r in per_run:
        rows.append({"schema": SUMMARY_SCHEMA, "kind": "run", **r})
        groups.setdefault(r["group"], []).append(r)
    agg_cols = ("K_end", "ES", "VS", "MAD", "MSE", "Bias", "wall_s")
    for gid, members in groups.items():
        base = {
            "schema": SUMMARY_SCHEMA,
            "group": gid,
            "system": members[0]["system"],
            "algorithm": members[0]["algorithm"],
            "seed": "",
            "K_conv": "",
            "termination": "",
        }
        vals = {c: np.array([float(m[c]) for m in members]) for c in agg_cols}
        rows.append({
            **base, "run_id": f"{gid}-mean", "kind": "mean",
            **{c: float(v.mean()) for c, v in vals.items()},
        })
        rows.append({
            **base, "run_id": f"{gid}-std", "kind": "std",
            **{
                c: float(v.std(ddof=1)) if len(v) > 1 else 0.0
                for c, v in vals.items()
            },
        })
    return rows


def _final_scores(run_id, group, record, truth, wall_s):
    ev = metrics.evaluate_run(record.iterations[-1].ensembles, truth)
    return {
        "run_id": run_id,
        "group": group,
        "system": record.config.system_id,
        "algorithm": record.algorithm,
        "seed": record.config.seed,
        "K_end": record.K_end,
        "K_conv": record.K_conv if record.K_conv is not None else "",
        "termination": record.termination,
        "wall_s": round(wall_s, 3),
        **ev.as_dict(),
    }


# -- record persistence ---------------------------------------------------


def record_payload(record, dump_ensembles=False):
    """JSON-ready dict.  Ensembles are kept only at k in {0, K_end} unless
    dump_ensembles; summaries are always present at every iteration."""
    keep = {0, record.K_end}
    its = []
    for rec in record.iterations:
        ens = None
        if rec.ensembles is not None and (dump_ensembles or rec.k in keep):
            ens = [np.asarray(e).tolist() for e in rec.ensembles]
        its.append({
            "k": rec.k,
            "L": rec.L,
            "means": np.asarray(rec.means).tolist(),
            "stddevs": np.asarray(rec.stddevs).tolist(),
            "conv_w2": np.asarray(rec.conv_w2).tolist(),
            "timings": rec.timings,
            "gp_hyperparams": rec.gp_hyperparams,
            "plateau_stat": rec.plateau_stat,
            "ensembles": ens,
        })
    ds = None
    if record.dataset is not None:
        ds = {
            "inputs": record.dataset.inputs.tolist(),
            "outputs": record.dataset.outputs.tolist(),
            "iteration_added": record.dataset.iteration_added.tolist(),
        }
    return {
        "schema": RECORD_SCHEMA,
        "config": asdict(record.config),
        "algorithm": record.algorithm,
        "mesh": {"t0": record.mesh.t0, "tN": record.mesh.tN, "N": record.mesh.N},
        "K_stop": record.K_stop,
        "K_end": record.K_end,
        "K_conv": record.K_conv,
        "termination": record.termination,
        "dataset": ds,
        "iterations": its,
    }


def write_record(path, record, dump_ensembles=False):
    with open(path, "w") as fh:
        json.dump(record_payload(record, dump_ensembles), fh)


def load_record(path):
    """Rebuild a RunRecord from its JSON payload (arrays, not lists)."""
    with open(path) as fh:
        raw = json.load(fh)
    if raw.get("schema") != RECORD_SCHEMA:
        raise ValueError(
            f"{path}: expected schema {RECORD_SCHEMA!r}, found {raw.get('schema')!r}"
        )
    cfg_raw = {
        k: v for k, v in raw["config"].items()
        if k not in ("statistic", "distance")
    }
    config = RunConfig(**cfg_raw)
    its = []
    for it in raw["iterations"]:
        ens = it["ensembles"]
        its.append(IterationRecord(
            k=it["k"],
            L=it["L"],
            means=np.asarray(it["means"]),
            stddevs=np.asarray(it["stddevs"]),
            conv_w2=np.asarray(it["conv_w2"]),
            timings=it["timings"],
            ensembles=None if ens is None else [np.asarray(e) for e in ens],
            gp_hyperparams=it["gp_hyperparams"],
            plateau_stat=it["plateau_stat"],
        ))
    dataset = None
    if raw["dataset"] is not None:
        dim = len(raw["dataset"]["inputs"][0]) if raw["dataset"]["inputs"] else 0
        dataset = CorrectionDataset(dim)
        for x, y, it in zip(
            raw["dataset"]["inputs"],
            raw["dataset"]["outputs"],
            raw["dataset"]["iteration_added"],
        ):
            dataset._inputs.append(np.asarray(x))
            dataset._outputs.append(np.asarray(y))
            dataset._iteration_added.append(int(it))
    mesh = raw["mesh"]
    return RunRecord(
        config=config,
        algorithm=raw["algorithm"],
        mesh=TimeMesh(mesh["t0"], mesh["tN"], mesh["N"]),
        iterations=its,
        dataset=dataset,
        K_stop=raw["K_stop"],
        K_end=raw["K_end"],
        K_conv=raw["K_conv"],
        termination=raw["termination"],
    )


# -- single-run command ---------------------------------------------------


def _default_epsilon(system, algorithm):
    return system.epsilon_prob if algorithm in _PROB_ALGOS else system.epsilon_det


def _config_from_args(args, system, algorithm):
    samples = args.samples
    if samples is None:
        samples = 5000 if algorithm in _PROB_ALGOS else 1
    eps = args.epsilon
    if eps is None:
        eps = _default_epsilon(system, algorithm)
    return RunConfig(
        system_id=args.system,
        seed=args.seed,
        n_samples=samples,
        epsilon=eps,
        max_iterations=args.kstop,
        kernel=args.kernel,
        neighbor_count=args.neighbors,
        sigma_init=args.sigma_init,
        gp_refit=args.gp_refit,
        variance_cap=args.variance_cap,
        plateau_window=args.plateau_window,
        plateau_rel_tol=args.plateau_rel_tol,
    )


def cmd_run(args):
    algorithm = args.algorithm
    system = systems.get_system(args.system)
    config = _config_from_args(args, system, algorithm)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run_id = f"{args.system}-{algorithm}-seed{config.seed}"
    t0 = time.perf_counter()
    record = run_algorithm(algorithm, system, config)
    wall = time.perf_counter() - t0
    truth = pint.sequential_fine(system)
    write_record(out / f"record_{run_id}.json", record, args.dump_ensembles)
    write_csv(
        out / f"metrics_{run_id}.csv",
        METRICS_COLUMNS,
        metrics_rows(run_id, record, truth),
    )
    print(
        f"{run_id}: {record.termination} K_end={record.K_end}"
        f" K_conv={record.K_conv} ({wall:.1f}s)"
    )
    return 0


# -- plan command ---------------------------------------------------------


def parse_plan(path):
    """Plan file: a [plan] section with output_dir, then [run:<id>] entries.

    Each entry is a RunConfig section plus ``algorithm`` and an optional
    ``repeats`` (seeds are seed + repeat index).  Seeds are mandatory.
    """
    cp = ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    if "plan" not in cp:
        raise ValueError(f"{path}: missing [plan] section")
    out_dir = cp["plan"].get("output_dir")
    if not out_dir:
        raise ValueError(f"{path}: [plan] must set output_dir")
    dump = cp["plan"].getboolean("dump_ensembles", fallback=False)
    entries = []
    for name in cp.sections():
        if not name.startswith("run:"):
            continue
        sec = cp[name]
        gid = name[len("run:"):]
        algorithm = sec.get("algorithm")
        if algorithm not in ALGORITHMS:
            raise ValueError(
                f"{path}: [{name}] needs algorithm in {ALGORITHMS}, "
                f"got {algorithm!r}"
            )
        base = RunConfig.from_section(sec)
        repeats = sec.getint("repeats", fallback=1)
        if repeats < 1:
            raise ValueError(f"{path}: [{name}] repeats must be >= 1")
        for r in range(repeats):
            run_id = gid if repeats == 1 else f"{gid}-r{r}"
            cfg = replace(base, seed=base.seed + r)
            entries.append((gid, run_id, algorithm, cfg))
    return Path(out_dir), dump, entries


def run_plan(path):
    out_dir, dump, entries = parse_plan(path)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = []
    failures = 0

    # Truth trajectories once per system, before the pool spins up.
    truths = {}
    for _, _, _, cfg in entries:
        if cfg.system_id not in truths:
            truths[cfg.system_id] = pint.sequential_fine(
                systems.get_system(cfg.system_id)
            )

    def task(entry):
        _, _, algorithm, cfg = entry
        system = systems.get_system(cfg.system_id)
        t0 = time.perf_counter()
        record = run_algorithm(algorithm, system, cfg)
        return record, time.perf_counter() - t0

    per_run = []
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        futures = [(e, pool.submit(task, e)) for e in entries]
        # Gather and write in plan order regardless of completion order.
        for (gid, run_id, algorithm, cfg), fut in futures:
            try:
                record, wall = fut.result()
            except Exception as exc:
                failures += 1
                manifest.append(f"FAILED {run_id}: {type(exc).__name__}: {exc}")
                continue
            rec_path = out_dir / f"record_{run_id}.json"
            met_path = out_dir / f"metrics_{run_id}.csv"
            write_record(rec_path, record, dump)
            write_csv(
                met_path,
                METRICS_COLUMNS,
                metrics_rows(run_id, record, truths[cfg.system_id]),
            )
            manifest.append(rec_path.name)
            manifest.append(met_path.name)
            per_run.append(
                _final_scores(run_id, gid, record, truths[cfg.system_id], wall)
            )

    if per_run:
        write_csv(out_dir / "summary.csv", SUMMARY_COLUMNS, summary_rows(per_run))
        manifest.append("summary.csv")
    (out_dir / "MANIFEST").write_text("".join(m + "\n" for m in manifest))
    return 1 if failures else 0


def cmd_summarize(args):
    """Rebuild a summary table from metrics CSVs alone."""
    per_run = []
    for path in args.inputs:
        rows = _read_csv(path, METRICS_SCHEMA)
        if not rows:
            continue
        run_id = rows[0]["run_id"]
        k_end = max(int(r["k"]) for r in rows)
        final = [r for r in rows if int(r["k"]) == k_end]
        entry = {
            "run_id": run_id,
            "group": run_id.rsplit("-r", 1)[0],
            "system": rows[0]["system"],
            "algorithm": rows[0]["algorithm"],
            "seed": "",
            "K_end": k_end,
            "K_conv": "",
            "termination": rows[0]["termination"],
            # Metrics files carry no real timings; see metrics_rows.
            "wall_s": 0.0,
        }
        for col in ("ES", "VS", "MAD", "MSE", "Bias"):
            entry[col] = float(np.mean([float(r[col]) for r in final]))
        per_run.append(entry)
    write_csv(args.out, SUMMARY_COLUMNS, summary_rows(per_run))
    print(f"wrote {args.out} ({len(per_run)} runs)")
    return 0


def cmd_diagnose(args):
    record = load_record(args.record)
    alphas = tuple(float(a) for a in args.alphas.split(","))
    report = diagnostics.fill_distance_sweep(
        record, alphas=alphas, n_probes=args.probes
    )
    rows = []
    for alpha in sorted(report):
        for k in sorted(report[alpha]):
            rows.append({
                "schema": FILL_SCHEMA,
                "run_id": Path(args.record).stem.replace("record_", ""),
                "alpha": alpha,
                "k": k,
                "fill_distance": report[alpha][k],
            })
    if args.out:
        write_csv(
            args.out,
            ["schema", "run_id", "alpha", "k", "fill_distance"],
            rows,
        )
        print(f"wrote {args.out} ({len(rows)} rows)")
    else:
        for r in rows:
            print(f"alpha={r['alpha']} k={r['k']} h={r['fill_distance']:.6e}")
    return 0


# -- argument parsing -----------------------------------------------------


def build_parser():
    top = argparse.ArgumentParser(
        prog="pint-prob",
        description="Parallel-in-time solvers with probabilistic corrections",
    )
    sub = top.add_subparsers(dest="command", required=True)

    for algorithm in ALGORITHMS:
        p = sub.add_parser(algorithm, help=f"run {algorithm} on one system")
        p.add_argument(
            "--system", required=True, choices=systems.available_systems()
        )
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--epsilon", type=float, default=None,
                       help="convergence tolerance (default: system's)")
        p.add_argument("--samples", type=int, default=None,
                       help="ensemble size (default 5000; 1 deterministic)")
        p.add_argument("--sigma-init", type=float, default=0.0)
        p.add_argument("--neighbors", type=int, default=None)
        p.add_argument("--kstop", type=int, default=None,
                       help="iteration budget (default: system's)")
        p.add_argument("--kernel", default="gaussian")
        p.add_argument("--gp-refit", default="warm", choices=("warm", "cold"))
        p.add_argument("--variance-cap", type=float, default=None)
        p.add_argument("--plateau-window", type=int, default=None)
        p.add_argument("--plateau-rel-tol", type=float, default=0.05)
        p.add_argument("--out", default=".")
        p.add_argument("--dump-ensembles", action="store_true")
        p.set_defaults(func=cmd_run, algorithm=algorithm)

    p = sub.add_parser("plan", help="run every entry of a plan file")
    p.add_argument("plan_file")
    p.set_defaults(func=lambda a: run_plan(a.plan_file))

    p = sub.add_parser("summarize", help="summary.csv from metrics CSVs")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", default="summary.csv")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("diagnose", help="post-hoc diagnostics on a record")
    dsub = p.add_subparsers(dest="diagnostic", required=True)
    fd = dsub.add_parser("fill-distance", help="dataset coverage per iteration")
    fd.add_argument("record")
    fd.add_argument("--alphas", default="0.5,0.9")
    fd.add_argument("--probes", type=int, default=64)
    fd.add_argument("--out", default=None)
    fd.set_defaults(func=cmd_diagnose)

    return top


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
