"""Cross-validated grid search over embedding hyperparameters and ensemble weights.

Every (hyperparameter config, fold) pair trains one set of embeddings and
scores every recommender setting on it. Both selection modes are read off the
same table of cells:

* ``reuse``: pick the config with the best user-item NDCG@10, then the best
  weight/metric setting for the ensemble using those same embeddings.
* ``fine_tune``: each recommender takes its own best (config, setting).

Since fine-tune maximises over a superset of what reuse considers, its
weighted NDCG@10 is never lower on the same folds.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from ..core import InteractionMatrix, TrainingError, WsrecError
from ..embed import ALS_GRID, BPR_GRID, AlsConfig, BprConfig, import_embeddings, train_snapshots
from ..recommend import DEFAULT_RATIOS, DOT, METRICS, Scorer, WeightConfig, weight_grid
from .folds import Fold, FoldSplit, split_folds
from .metrics import curves

logger = logging.getLogger(__name__)

USER_ITEM = "user_item"
ITEM_ITEM = "item_item"
WEIGHTED = "weighted"
RECOMMENDERS = (USER_ITEM, ITEM_ITEM, WEIGHTED)
REUSE = "reuse"
FINE_TUNE = "fine_tune"
MODES = (REUSE, FINE_TUNE)
TUNE_AT = 10

LEARNERS = ("als", "bpr", "external")
DEFAULT_GRIDS = {"als": ALS_GRID, "bpr": BPR_GRID, "external": {}}


@dataclass(frozen=True)
class ExternalConfig:
    """Embeddings trained elsewhere; ``{fold}`` in the path is the fold index."""

    path: str

    def tag(self) -> str:
        return f"external(path={self.path})"


def expand_grid(learner: str, grid: Mapping[str, Sequence], fixed: Mapping | None = None) -> list:
    """Cartesian product of ``grid`` as learner config objects, in grid order."""
    fixed = dict(fixed or {})
    if learner == "external":
        if "path" not in fixed:
            raise ValueError("the external learner needs an embeddings path")
        return [ExternalConfig(str(fixed["path"]))]
    cls = {"als": AlsConfig, "bpr": BprConfig}.get(learner)
    if cls is None:
        raise ValueError(f"unknown learner {learner!r}; expected one of {LEARNERS}")
    names = list(grid)
    out = []
    for values in itertools.product(*(grid[k] for k in names)):
        out.append(cls(**{**fixed, **dict(zip(names, values))}))
    return out


def hyper_key(cfg) -> str:
    return cfg.tag()


def recommender_settings(
    ratios: Iterable[tuple[float, float]] = DEFAULT_RATIOS,
    metrics: Iterable[str] = METRICS,
    base_metric: str = DOT,
) -> dict[str, list[WeightConfig]]:
    return {
        USER_ITEM: [WeightConfig(1.0, 0.0, base_metric)],
        ITEM_ITEM: [WeightConfig(0.0, 1.0, base_metric)],
        WEIGHTED: weight_grid(ratios, metrics),
    }


@dataclass
class EvalReport:
    """Per-fold and fold-mean HR@N / NDCG@N curves for one configuration."""

    learner: str
    hyper: str
    weights: WeightConfig
    hr: np.ndarray  # folds x n_max
    ndcg: np.ndarray  # folds x n_max

    @property
    def mean_hr(self) -> np.ndarray:
        return self.hr.mean(axis=0)

    @property
    def mean_ndcg(self) -> np.ndarray:
        return self.ndcg.mean(axis=0)

    def ndcg_at(self, n: int) -> float:
        return float(self.mean_ndcg[min(n, self.ndcg.shape[1]) - 1])

    def hr_at(self, n: int) -> float:
        return float(self.mean_hr[min(n, self.hr.shape[1]) - 1])

    def to_dict(self) -> dict:
        return {
            "learner": self.learner,
            "hyper": self.hyper,
            "weights": asdict(self.weights),
            "per_fold": [
                {"hr": h.tolist(), "ndcg": g.tolist()} for h, g in zip(self.hr, self.ndcg)
            ],
            "mean": {"hr": self.mean_hr.tolist(), "ndcg": self.mean_ndcg.tolist()},
        }


@dataclass
class Selection:
    recommender: str
    report: EvalReport

    @property
    def score(self) -> float:
        return self.report.ndcg_at(TUNE_AT)


@dataclass
class SearchResult:
    learner: str
    mode: str
    n_max: int
    hypers: list[str]
    settings: dict[str, list[WeightConfig]]
    reports: dict[tuple[str, str], EvalReport]
    errors: dict[str, str]
    reuse: dict[str, Selection]
    fine_tune: dict[str, Selection]
    dropped_test_pairs: list[int] = field(default_factory=list)

    @property
    def best(self) -> dict[str, Selection]:
        return self.fine_tune if self.mode == FINE_TUNE else self.reuse

    def improvement(self) -> dict[str, float]:
        """Relative NDCG@10 gain of fine-tune over reuse, per recommender."""
        out = {}
        for name in self.reuse:
            r, f = self.reuse[name].score, self.fine_tune[name].score
            out[name] = (f - r) / r if r > 0 else 0.0
        return out

    def report(self, hyper: str, w: WeightConfig) -> EvalReport:
        return self.reports[(hyper, w.label)]

    def to_dict(self) -> dict:
        def sel(s: Selection):
            return {"ndcg@10": s.score, "hr@10": s.report.hr_at(TUNE_AT), **s.report.to_dict()}

        return {
            "learner": self.learner,
            "mode": self.mode,
            "n_max": self.n_max,
            "dropped_test_pairs": self.dropped_test_pairs,
            "best": {k: sel(v) for k, v in self.best.items()},
            "reuse": {k: sel(v) for k, v in self.reuse.items()},
            "fine_tune": {k: sel(v) for k, v in self.fine_tune.items()},
            "fine_tune_improvement": self.improvement(),
            "errors": self.errors,
            "cells": [
                {"ndcg@10": rep.ndcg_at(TUNE_AT), "hr@10": rep.hr_at(TUNE_AT), **rep.to_dict()}
                for rep in self.reports.values()
            ],
        }


def evaluate_embeddings(
    e,
    fold: Fold,
    settings: Sequence[WeightConfig],
    n_max: int = 20,
    cap_idcg_at_n: bool = True,
    per_user_hits: bool = True,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """HR/NDCG curves of each weight setting on one fold's test pairs."""
    test = fold.test_sets()
    users = np.array(sorted(test), dtype=np.int64)
    scorer = Scorer(e, fold.train)
    out = {}
    for w in settings:
        recs = scorer.top_n(w, n_max, users)
        out[w.label] = curves(recs, test, n_max, cap_idcg_at_n, per_user_hits)
    return out


# --- job execution -------------------------------------------------------------


@dataclass(frozen=True)
class _Job:
    group: int
    fold_index: int
    configs: tuple  # configs differing only in epochs, or one external config


def _group_by_epochs(configs: list) -> list[tuple]:
    groups: dict[str, list] = {}
    for cfg in configs:
        if isinstance(cfg, ExternalConfig):
            key = cfg.tag()
        else:
            key = cfg.__class__(**{**asdict(cfg), "epochs": 1}).tag()
        groups.setdefault(key, []).append(cfg)
    return [tuple(g) for g in groups.values()]


def _embeddings_for(job: _Job, fold: Fold) -> dict:
    first = job.configs[0]
    if isinstance(first, ExternalConfig):
        path = first.path.format(fold=job.fold_index)
        e = import_embeddings(path, fold.train.user_map, fold.train.item_map, first.tag())
        return {hyper_key(first): e}
    snaps = train_snapshots(fold.train, first, [c.epochs for c in job.configs])
    return {hyper_key(c): snaps[c.epochs] for c in job.configs}


def _run_job(job: _Job, fold: Fold, settings: list[WeightConfig], n_max: int, cap: bool, per_user: bool) -> dict:
    """Returns {hyper: {"curves": {label: [hr, ndcg]}} or {"error": msg}}."""
    try:
        embeddings = _embeddings_for(job, fold)
    except (WsrecError, ValueError, OSError) as exc:
        msg = f"{type(exc).__name__}: {exc}"
        return {hyper_key(c): {"error": msg} for c in job.configs}
    out = {}
    for key, e in embeddings.items():
        res = evaluate_embeddings(e, fold, settings, n_max, cap, per_user)
        out[key] = {"curves": {lab: [h.tolist(), g.tolist()] for lab, (h, g) in res.items()}}
    return out


def _job_id(job: _Job, fingerprint: str) -> str:
    text = json.dumps([fingerprint, job.fold_index, [c.tag() for c in job.configs]])
    return hashlib.sha256(text.encode()).hexdigest()[:20]


def _execute(jobs, folds, settings, n_max, cap, per_user, checkpoint_dir, fingerprint, workers, progress):
    results: dict[int, dict] = {}
    pending = []
    for k, job in enumerate(jobs):
        if checkpoint_dir is not None:
            path = Path(checkpoint_dir) / f"{_job_id(job, fingerprint)}.json"
            if path.is_file():
                results[k] = json.loads(path.read_text())
                continue
        pending.append(k)

    def store(k, res):
        results[k] = res
        if checkpoint_dir is not None:
            path = Path(checkpoint_dir) / f"{_job_id(jobs[k], fingerprint)}.json"
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(res))
            os.replace(tmp, path)
        if progress is not None:
            progress(len(results), len(jobs))

    if checkpoint_dir is not None:
        Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                k: pool.submit(_run_job, jobs[k], folds[jobs[k].fold_index], settings, n_max, cap, per_user)
                for k in pending
            }
            for k in pending:
                store(k, futures[k].result())
    else:
        for k in pending:
            store(k, _run_job(jobs[k], folds[jobs[k].fold_index], settings, n_max, cap, per_user))
    return [results[k] for k in range(len(jobs))]


# --- selection -----------------------------------------------------------------


def _argmax(candidates: list[EvalReport]) -> EvalReport:
    # first maximum in grid order wins ties
    best = candidates[0]
    for rep in candidates[1:]:
        if rep.ndcg_at(TUNE_AT) > best.ndcg_at(TUNE_AT):
            best = rep
    return best


def _select(hypers, settings, reports, learner):
    ok = [h for h in hypers if all((h, w.label) in reports for ws in settings.values() for w in ws)]
    if not ok:
        raise TrainingError(f"{learner}: every grid cell failed")
    fine = {}
    for name, ws in settings.items():
        fine[name] = Selection(name, _argmax([reports[(h, w.label)] for h in ok for w in ws]))
    ui = settings[USER_ITEM]
    h_star = _argmax([reports[(h, w.label)] for h in ok for w in ui]).hyper
    reuse = {
        name: Selection(name, _argmax([reports[(h_star, w.label)] for w in ws]))
        for name, ws in settings.items()
    }
    return reuse, fine


def grid_search(
    m: InteractionMatrix,
    learner: str,
    hyper_grid: Mapping[str, Sequence] | None = None,
    weight_ratios: Iterable[tuple[float, float]] = DEFAULT_RATIOS,
    metrics: Iterable[str] = METRICS,
    mode: str = REUSE,
    *,
    seed: int = 0,
    n_max: int = 20,
    folds: FoldSplit | None = None,
    learner_params: Mapping | None = None,
    base_metric: str = DOT,
    cap_idcg_at_n: bool = True,
    per_user_hits: bool = True,
    checkpoint_dir=None,
    workers: int = 1,
    progress: Callable[[int, int], None] | None = None,
) -> SearchResult:
    """Run the full cross-validated search for one learner on one dataset.

    ``learner_params`` are fixed learner fields (e.g. ``seed``,
    ``confidence_scale``, or ``path`` for external embeddings). A cell whose
    training fails is recorded in ``errors`` and left out of selection.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    if learner not in LEARNERS:
        raise ValueError(f"unknown learner {learner!r}; expected one of {LEARNERS}")
    hyper_grid = DEFAULT_GRIDS[learner] if hyper_grid is None else hyper_grid
    if learner != "external" and (not hyper_grid or any(len(v) == 0 for v in hyper_grid.values())):
        raise ValueError("hyperparameter grid must be non-empty")
    fixed = {"seed": seed, **dict(learner_params or {})}
    if learner == "external":
        fixed.pop("seed", None)
    configs = expand_grid(learner, hyper_grid, fixed)
    settings = recommender_settings(list(weight_ratios), list(metrics), base_metric)
    if not settings[WEIGHTED]:
        raise ValueError("weight grid and metric set must be non-empty")
    if folds is None:
        folds = split_folds(m, seed)

    all_settings = [w for ws in settings.values() for w in ws]
    unique = list({w.label: w for w in all_settings}.values())
    jobs = [_Job(g, f, group) for g, group in enumerate(_group_by_epochs(configs)) for f in range(len(folds))]
    fingerprint = json.dumps(
        {"seed": folds.seed, "n_max": n_max, "cap": cap_idcg_at_n, "per_user": per_user_hits,
         "settings": [w.label for w in unique], "matrix": m.digest()},
        sort_keys=True,
    )
    outputs = _execute(jobs, folds, unique, n_max, cap_idcg_at_n, per_user_hits,
                       checkpoint_dir, fingerprint, workers, progress)

    per_cell: dict[str, dict[int, dict]] = {}
    errors: dict[str, str] = {}
    for job, res in zip(jobs, outputs):
        for key, payload in res.items():
            if "error" in payload:
                errors.setdefault(key, f"fold {job.fold_index}: {payload['error']}")
                logger.warning("%s fold %d failed: %s", key, job.fold_index, payload["error"])
            else:
                per_cell.setdefault(key, {})[job.fold_index] = payload["curves"]

    hypers = [hyper_key(c) for c in configs]
    reports: dict[tuple[str, str], EvalReport] = {}
    for h in hypers:
        if h in errors or len(per_cell.get(h, {})) != len(folds):
            continue
        fold_curves = [per_cell[h][f] for f in range(len(folds))]
        for w in unique:
            hr = np.array([fc[w.label][0] for fc in fold_curves])
            nd = np.array([fc[w.label][1] for fc in fold_curves])
            reports[(h, w.label)] = EvalReport(learner, h, w, hr, nd)

    reuse, fine = _select(hypers, settings, reports, learner)
    return SearchResult(
        learner=learner,
        mode=mode,
        n_max=n_max,
        hypers=hypers,
        settings=settings,
        reports=reports,
        errors=errors,
        reuse=reuse,
        fine_tune=fine,
        dropped_test_pairs=[f.dropped for f in folds],
    )
