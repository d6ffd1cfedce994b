"""Command-line entry point: ``wsrec prepare | run | stats``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__, kernels
from .core import DataError, TrainingError, WsrecError, sparsity
from .evaluation import friedman_test
from .evaluation.search import DEFAULT_GRIDS, LEARNERS, MODES, RECOMMENDERS, REUSE, TUNE_AT, grid_search
from .ingest import PRESETS, DatasetSpec, load_dataset, read_interactions, write_interactions
from .recommend import DEFAULT_RATIOS, METRICS

logger = logging.getLogger("wsrec")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAINING = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments, which collides with the data-error code
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- prepare -------------------------------------------------------------------


def _dataset_spec(args) -> DatasetSpec:
    if args.spec:
        d = _load_structured(args.spec)
        try:
            spec = DatasetSpec.from_dict(d)
        except (TypeError, ValueError, KeyError) as exc:
            raise UsageError(f"bad dataset description in {args.spec}: {exc}") from None
    elif args.preset:
        if args.preset not in PRESETS:
            raise UsageError(f"unknown preset {args.preset!r}; known: {', '.join(sorted(PRESETS))}")
        spec = PRESETS[args.preset]
    else:
        raise UsageError("give --preset or --spec")
    if args.name:
        spec = DatasetSpec.from_dict({**spec.__dict__, "name": args.name})
    return spec.with_path(args.input)


def stats_line(name, m) -> str:
    return (
        f"{name}: |U|={m.n_users} |I|={m.n_items} |R|={m.interaction_count} "
        f"S={100 * sparsity(m):.2f}%"
    )


def cmd_prepare(args) -> int:
    spec = _dataset_spec(args)
    m, parsed = load_dataset(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    canonical = out / f"{spec.name}.interactions.tsv"
    write_interactions(m, canonical)
    stats = {
        "dataset": spec.name,
        "raw_records": len(parsed.records),
        "rejected_rows": parsed.rejected_count,
        "users": m.n_users,
        "items": m.n_items,
        "interactions": m.interaction_count,
        "sparsity": sparsity(m),
        "digest": m.digest(),
    }
    (out / f"{spec.name}.stats.json").write_text(json.dumps(stats, indent=2) + "\n")
    if parsed.rejected_count:
        print(f"{spec.name}: {parsed.rejected_count} malformed rows rejected "
              f"(first at line {parsed.rejected[0][0]})", file=sys.stderr)
    print(stats_line(spec.name, m))
    return EXIT_OK


# --- run -----------------------------------------------------------------------


def _load_structured(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            d = yaml.safe_load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"{path} is not valid YAML/JSON: {exc}") from None
    if not isinstance(d, dict):
        raise UsageError(f"{path} must hold a mapping")
    return d


def _parse_ratios(text) -> list[tuple[float, float]]:
    items = text.split(",") if isinstance(text, str) else list(text)
    out = []
    for item in items:
        # YAML 1.1 reads an unquoted 3:2 as a base-60 integer, so also accept [3, 2]
        parts = item if isinstance(item, (list, tuple)) else str(item).split(":")
        try:
            r, s = (float(x) for x in parts)
        except (TypeError, ValueError):
            raise UsageError(f"bad weight ratio {item!r}; expected '3:2' (quoted in YAML) or [3, 2]") from None
        out.append((r, s))
    return out


def _listify(value):
    return [v.strip() for v in value.split(",") if v.strip()] if isinstance(value, str) else list(value)


def _parse_dataset_arg(text) -> dict:
    name, sep, path = text.partition("=")
    if not sep:
        path, name = text, Path(text).name.split(".")[0]
    return {"name": name, "interactions": path}


def resolve_config(args) -> dict:
    cfg = _load_structured(args.config) if args.config else {}
    if args.dataset:
        cfg["datasets"] = [_parse_dataset_arg(d) for d in args.dataset]
    for key, flag in (("learners", args.learner), ("metrics", args.metric)):
        if flag:
            cfg[key] = _listify(flag)
    if args.weights:
        cfg["weights"] = args.weights
    for key in ("mode", "seed", "n_max", "out", "workers"):
        value = getattr(args, key)
        if value is not None:
            cfg[key] = value

    datasets = cfg.get("datasets") or []
    if not datasets:
        raise UsageError("no dataset given (use --dataset or 'datasets' in the config)")
    learners = _listify(cfg.get("learners", ["als"]))
    for name in learners:
        if name not in LEARNERS:
            raise UsageError(f"unknown learner {name!r}; expected one of {LEARNERS}")
    metrics = _listify(cfg.get("metrics", list(METRICS)))
    for name in metrics:
        if name not in METRICS:
            raise UsageError(f"unknown metric {name!r}; expected one of {METRICS}")
    mode = cfg.get("mode", REUSE)
    if mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}")
    n_max = int(cfg.get("n_max", 20))
    if n_max < 1:
        raise UsageError("n_max must be at least 1")
    grids = {k: {p: list(v) for p, v in g.items()} for k, g in DEFAULT_GRIDS.items()}
    for learner, grid in (cfg.get("grids") or {}).items():
        grids[learner] = {p: list(v) if isinstance(v, (list, tuple)) else [v] for p, v in grid.items()}
    params = cfg.get("learner_params") or {}
    if "external" in learners and "path" not in params.get("external", {}):
        raise UsageError("the external learner needs learner_params.external.path")

    resolved_sets = []
    for d in datasets:
        if not isinstance(d, dict) or "name" not in d:
            raise UsageError("each dataset needs a name")
        if "interactions" not in d and "raw" not in d:
            raise UsageError(f"dataset {d['name']!r} needs 'interactions' or 'raw'")
        resolved_sets.append(dict(d))
    return {
        "datasets": resolved_sets,
        "learners": learners,
        "grids": {k: grids[k] for k in learners},
        "learner_params": {k: dict(params.get(k, {})) for k in learners},
        "weights": [list(r) for r in _parse_ratios(cfg.get("weights", [f"{a}:{b}" for a, b in DEFAULT_RATIOS]))],
        "metrics": metrics,
        "mode": mode,
        "seed": int(cfg.get("seed", 0)),
        "n_max": n_max,
        "cap_idcg_at_n": bool(cfg.get("cap_idcg_at_n", True)),
        "per_user_hits": bool(cfg.get("per_user_hits", True)),
        "out": str(cfg.get("out", "results")),
        "workers": int(cfg.get("workers", 1)),
    }


def _load_run_dataset(d: dict):
    if "interactions" in d:
        return read_interactions(d["interactions"])
    raw = dict(d["raw"])
    raw.setdefault("name", d["name"])
    m, _ = load_dataset(DatasetSpec.from_dict(raw))
    return m


def result_config(cfg: dict) -> dict:
    """The config minus fields that cannot change results (output dir, pool size)."""
    return {k: v for k, v in cfg.items() if k not in ("out", "workers")}


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(result_config(cfg), sort_keys=True).encode()).hexdigest()


def _write_curves(out: Path, dataset: str, learner: str, result) -> None:
    curves_dir = out / "curves"
    curves_dir.mkdir(exist_ok=True)
    for name, sel in result.best.items():
        rep = sel.report
        with open(curves_dir / f"{dataset}_{learner}_{name}.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["N", "ndcg", "hr"])
            for n, (g, h) in enumerate(zip(rep.mean_ndcg.tolist(), rep.mean_hr.tolist()), start=1):
                w.writerow([n, repr(g), repr(h)])


def _write_table(path: Path, cfg: dict, runs: dict, key: str) -> None:
    header = ["dataset"] + [f"{ln}_{r}" for ln in cfg["learners"] for r in RECOMMENDERS]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for d in cfg["datasets"]:
            row = [d["name"]]
            for ln in cfg["learners"]:
                res = runs.get(d["name"], {}).get(ln, {})
                best = res.get("best", {}) if isinstance(res, dict) else {}
                row += [f"{best[r][key]:.6f}" if r in best else "" for r in RECOMMENDERS]
            w.writerow(row)


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    runs: dict[str, dict] = {}
    digests = {}
    status = EXIT_OK
    for d in cfg["datasets"]:
        name = d["name"]
        try:
            m = _load_run_dataset(d)
        except DataError as exc:
            print(f"{name}: data error: {exc}", file=sys.stderr)
            runs[name] = {"error": f"DataError: {exc}"}
            status = max(status, EXIT_DATA)
            continue
        digests[name] = m.digest()
        runs[name] = {}
        for learner in cfg["learners"]:
            logger.info("%s / %s: searching", name, learner)
            try:
                res = grid_search(
                    m,
                    learner,
                    cfg["grids"][learner],
                    weight_ratios=[tuple(r) for r in cfg["weights"]],
                    metrics=cfg["metrics"],
                    mode=cfg["mode"],
                    seed=cfg["seed"],
                    n_max=cfg["n_max"],
                    learner_params=cfg["learner_params"][learner],
                    cap_idcg_at_n=cfg["cap_idcg_at_n"],
                    per_user_hits=cfg["per_user_hits"],
                    checkpoint_dir=out / "checkpoints" / name / learner,
                    workers=cfg["workers"],
                )
            except (WsrecError, ValueError) as exc:
                code = EXIT_DATA if isinstance(exc, DataError) else EXIT_TRAINING
                print(f"{name} / {learner}: {type(exc).__name__}: {exc}", file=sys.stderr)
                runs[name][learner] = {"error": f"{type(exc).__name__}: {exc}"}
                status = max(status, code)
                continue
            for cell, msg in res.errors.items():
                print(f"{name} / {learner} / {cell}: {msg}", file=sys.stderr)
            runs[name][learner] = res.to_dict()
            _write_curves(out, name, learner, res)
            best = res.best
            print(f"{name} / {learner} ({cfg['mode']}): " + "  ".join(
                f"{r}={best[r].score:.4f}" for r in RECOMMENDERS))

    results = {
        "provenance": {
            "package": "wsrec",
            "version": __version__,
            "kernels": kernels.BACKEND,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "config_hash": config_hash(cfg),
            "seed": cfg["seed"],
            "dataset_digests": digests,
            "tuned_on": f"ndcg@{TUNE_AT}",
        },
        "config": result_config(cfg),
        "runs": runs,
    }
    (out / "results.json").write_text(json.dumps(results, indent=1, sort_keys=True) + "\n")
    _write_table(out / "table.csv", cfg, runs, f"ndcg@{TUNE_AT}")
    _write_table(out / "table_hr.csv", cfg, runs, f"hr@{TUNE_AT}")
    return status


# --- stats ---------------------------------------------------------------------


def read_score_table(path) -> tuple[list[str], list[str], np.ndarray]:
    """CSV with a header row of model names and one row per dataset."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    if len(rows) < 2:
        raise DataError(f"{path}: need a header and at least one row")
    models = rows[0][1:]
    datasets, values = [], []
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(models) + 1:
            raise DataError(f"{path}:{line_no}: expected {len(models) + 1} fields, got {len(row)}")
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError:
            raise DataError(f"{path}:{line_no}: missing or non-numeric cell") from None
        datasets.append(row[0])
    return models, datasets, np.array(values)


def cmd_stats(args) -> int:
    models, datasets, table = read_score_table(args.table)
    res = friedman_test(table, alpha=args.alpha, models=models)
    print(f"datasets n={res.n}, models k={res.k}")
    print(f"Friedman X2_r = {res.friedman_statistic:.4f} (p = {res.p_value:.3g})")
    print("average ranks:")
    for name, r in sorted(zip(models, res.average_ranks), key=lambda t: t[1]):
        print(f"  {r:6.3f}  {name}")
    print(f"Nemenyi CD (alpha={args.alpha:g}) = {res.nemenyi_cd:.4f}")
    pairs = res.significant_pairs()
    if pairs:
        print("pairs differing by more than CD:")
        for a, b, gap in pairs:
            print(f"  {a} vs {b}: {gap:.3f}")
    else:
        print("no pair differs by more than CD")
    return EXIT_OK


# --- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wsrec", description="Weighted-similarity top-N recommendation experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pp = sub.add_parser("prepare", help="parse and preprocess a raw dataset")
    pp.add_argument("input", help="raw dataset file")
    pp.add_argument("--preset", help=f"known layout: {', '.join(sorted(PRESETS))}")
    pp.add_argument("--spec", help="YAML/JSON dataset description (overrides --preset)")
    pp.add_argument("--name", help="dataset name used for output files")
    pp.add_argument("--out", default="prepared")
    pp.set_defaults(func=cmd_prepare)

    pr = sub.add_parser("run", help="cross-validated grid search and reporting")
    pr.add_argument("--config", help="YAML/JSON run configuration")
    pr.add_argument("--dataset", action="append", help="[name=]canonical interactions file; repeatable")
    pr.add_argument("--learner", help="comma list of als, bpr, external")
    pr.add_argument("--mode", choices=MODES)
    pr.add_argument("--seed", type=int)
    pr.add_argument("--n-max", dest="n_max", type=int)
    pr.add_argument("--metric", help="comma list of dot, cosine")
    pr.add_argument("--weights", help="comma list of w_R:w_S ratios, e.g. 1:4,1:1,4:1")
    pr.add_argument("--out")
    pr.add_argument("--workers", type=int, help="parallel grid jobs")
    pr.set_defaults(func=cmd_run)

    ps = sub.add_parser("stats", help="Friedman test and Nemenyi CD on a score table")
    ps.add_argument("table", help="CSV: header of model names, one row per dataset")
    ps.add_argument("--alpha", type=float, default=0.05, choices=(0.05, 0.10))
    ps.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"wsrec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"wsrec: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"wsrec: training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
