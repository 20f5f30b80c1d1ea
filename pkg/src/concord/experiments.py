"""Experiment drivers behind the CLI: training runs, evaluation, ablations,
the toy-dataset study, and reporting.

Every driver writes its manifest before any long-running work so a crashed
run still leaves a record of what it was doing. Output CSVs are a pure
function of (config, seeds); wall-clock timings go to a ``train_log.csv``
sidecar where bit-for-bit reproducibility is not expected.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dataio import (
    ExperimentManifest,
    format_float,
    load_dataset,
    read_metrics_csv,
    write_manifest,
    write_metrics_csv,
)
from .model import (
    ModelParams,
    TrainConfig,
    mean_metrics,
    per_object_metrics,
    save_checkpoint,
    train,
)
from .toyset import (
    MiningResult,
    ToyParams,
    canonical_split,
    group_cd_stats,
    mine_adversarial_subset,
    sample_uniform_subset,
    underside_split,
    uniform_groups,
)

DEFAULT_AB_GRID = ((0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0), (0.1, 1.0))
DEFAULT_N_LIST = (2, 3, 4, 6, 12)
DEFAULT_VIEW_BUDGET = 12


def effective_jobs(jobs: int) -> int:
    """Respect the CONCORD_THREADS cap on worker parallelism."""
    cap = os.environ.get("CONCORD_THREADS")
    if cap is not None:
        try:
            jobs = min(jobs, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, jobs)


def run_training(config: TrainConfig, objects, out_dir, run_id: str | None = None):
    """Train once and write manifest, checkpoint, metrics.csv, train_log.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_id = run_id if run_id is not None else out_dir.name
    manifest = ExperimentManifest(
        kind="train",
        config=config,
        seeds=(config.seed,),
        outputs={"checkpoint": "checkpoint.bin", "metrics": "metrics.csv", "log": "train_log.csv"},
    )
    write_manifest(out_dir / "manifest.json", manifest)

    params, history = train(config, objects)
    save_checkpoint(out_dir / "checkpoint.bin", params)

    rows = []
    for rec in history:
        tm, em = rec.train_metrics, rec.eval_metrics
        # ms_per_step stays 0.0 here so reruns are byte-identical; real
        # timings live in train_log.csv.
        rows.append((run_id, rec.epoch, "train", tm.cd_l2, tm.cd_l1, tm.da_cd, tm.f1, 0.0))
        rows.append((run_id, rec.epoch, "eval", em.cd_l2, em.cd_l1, em.da_cd, em.f1, 0.0))
    write_metrics_csv(out_dir / "metrics.csv", rows)

    with open(out_dir / "train_log.csv", "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run", "epoch", "train_loss", "ms_per_step"])
        for rec in history:
            writer.writerow([run_id, rec.epoch, format_float(rec.train_loss),
                             format_float(rec.ms_per_step)])
    return params, history


def final_eval_cd(history) -> float:
    return history[-1].eval_metrics.cd_l2


def mean_ms_per_step(history) -> float:
    return float(np.mean([rec.ms_per_step for rec in history]))


def cmd_train(config_path, data_dir, out_dir):
    from .dataio import read_config

    config = read_config(config_path)
    objects = load_dataset(data_dir)
    return run_training(config, objects, out_dir)


def evaluate_checkpoint(params: ModelParams, objects, ratios, seed: int, tau: float = 0.01):
    """Per-object and aggregate metric rows at each requested missing ratio."""
    rows = []
    for ratio in ratios:
        if not (0.0 < ratio < 1.0):
            raise ValueError(f"ratio must be inside (0, 1), got {ratio}")
        split = f"eval@{ratio:g}"
        per_obj = per_object_metrics(params, objects, ratio, seed, tau)
        for obj, mb in zip(objects, per_obj):
            label = obj.label if obj.label is not None else "object"
            rows.append((label, 0, split, mb.cd_l2, mb.cd_l1, mb.da_cd, mb.f1, 0.0))
        agg = mean_metrics(per_obj)
        rows.append(("aggregate", 0, split, agg.cd_l2, agg.cd_l1, agg.da_cd, agg.f1, 0.0))
    return rows


def cmd_eval(checkpoint_path, data_dir, ratios, out_dir, seed: int = 0, tau: float = 0.01):
    from .model import load_checkpoint
    from .views import normalize_cloud

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = load_checkpoint(checkpoint_path)
    objects = [normalize_cloud(c) for c in load_dataset(data_dir)]
    rows = evaluate_checkpoint(params, objects, ratios, seed, tau)
    write_metrics_csv(out_dir / "eval_metrics.csv", rows)
    return rows


def _train_cell(args):
    """Worker for one ablation cell; returns its summary fields."""
    config, objects, out_dir, run_id = args
    _, history = run_training(config, objects, out_dir, run_id)
    return final_eval_cd(history), mean_ms_per_step(history)


def _run_cells(cells, jobs: int):
    jobs = effective_jobs(jobs)
    if jobs == 1 or len(cells) <= 1:
        return [_train_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_train_cell, cells))


def cmd_ablation_alphabeta(config: TrainConfig, objects, out_dir, grid=DEFAULT_AB_GRID,
                           seeds=(0,), jobs: int = 1):
    """One run per (alpha, beta) cell and seed; summary of final eval CDs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(out_dir / "manifest.json", ExperimentManifest(
        kind="ablation-alphabeta", config=config, seeds=tuple(seeds),
        outputs={"summary": "summary.csv"},
    ))
    cells = []
    keys = []
    for alpha, beta in grid:
        for seed in seeds:
            cell_cfg = replace(config, alpha=float(alpha), beta=float(beta), seed=int(seed))
            run_id = f"ab_a{alpha:g}_b{beta:g}_s{seed}"
            cells.append((cell_cfg, objects, out_dir / run_id, run_id))
            keys.append((float(alpha), float(beta), int(seed)))
    results = _run_cells(cells, jobs)

    by_cell: dict[tuple[float, float], list[float]] = {}
    rows = []
    for (alpha, beta, seed), (cd, _ms) in zip(keys, results):
        rows.append((alpha, beta, str(seed), cd))
        by_cell.setdefault((alpha, beta), []).append(cd)
    for (alpha, beta), cds in by_cell.items():
        rows.append((alpha, beta, "median", float(np.median(cds))))

    with open(out_dir / "summary.csv", "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["alpha", "beta", "seed", "final_cd_l2"])
        for alpha, beta, seed, cd in rows:
            writer.writerow([format_float(alpha), format_float(beta), seed, format_float(cd)])
    return rows


def cmd_ablation_n(config: TrainConfig, objects, out_dir, n_list=DEFAULT_N_LIST,
                   seeds=(0,), budget: int = DEFAULT_VIEW_BUDGET, jobs: int = 1):
    """Sweep the view count under an equal total-clouds-per-step budget.

    Batch size scales down as n rises (budget // n objects per step) so each
    step touches the same number of clouds regardless of n.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(out_dir / "manifest.json", ExperimentManifest(
        kind="ablation-n", config=config, seeds=tuple(seeds),
        outputs={"summary": "summary.csv"},
    ))
    cells = []
    keys = []
    for n in n_list:
        batch = max(1, int(budget) // int(n))
        for seed in seeds:
            cell_cfg = replace(config, n_views=int(n), batch_size=batch, seed=int(seed))
            run_id = f"n{n}_s{seed}"
            cells.append((cell_cfg, objects, out_dir / run_id, run_id))
            keys.append((int(n), batch, int(seed)))
    results = _run_cells(cells, jobs)

    by_n: dict[int, list[tuple[float, float]]] = {}
    rows = []
    for (n, batch, seed), (cd, ms) in zip(keys, results):
        rows.append((n, batch, str(seed), cd, ms))
        by_n.setdefault(n, []).append((cd, ms))
    for n, vals in by_n.items():
        batch = max(1, int(budget) // int(n))
        rows.append((n, batch, "median",
                     float(np.median([v[0] for v in vals])),
                     float(np.mean([v[1] for v in vals]))))

    with open(out_dir / "summary.csv", "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "batch_size", "seed", "final_cd_l2", "ms_per_step"])
        for n, batch, seed, cd, ms in rows:
            writer.writerow([n, batch, seed, format_float(cd), format_float(ms)])
    return rows


def mined_statistic_gate(corpus_elements, mining: MiningResult, seed: int) -> dict:
    """Verify the mined dataset has the advertised structure.

    Within mined neighbor groups the incomplete sides must be closer and the
    missing sides farther apart than in random groups of the same shape.
    """
    if not mining.groups:
        raise ValueError("mined-statistic gate: no mining groups")
    group_size = 1 + len(mining.groups[0][1])
    control = uniform_groups(len(mining.groups), group_size, len(corpus_elements), seed)
    mined_inc, mined_mis = group_cd_stats(corpus_elements, mining.groups)
    ctrl_inc, ctrl_mis = group_cd_stats(corpus_elements, control)
    stats = {
        "mined_inc_cd": mined_inc,
        "mined_mis_cd": mined_mis,
        "uniform_inc_cd": ctrl_inc,
        "uniform_mis_cd": ctrl_mis,
    }
    if not (mined_inc < ctrl_inc and mined_mis > ctrl_mis):
        raise ValueError(f"mined-statistic gate failed: {stats}")
    return stats


def cmd_toyset_experiment(objects, toy_params: ToyParams, config: TrainConfig, out_dir,
                          replicas: int = 3, mine_seed: int = 0, split_ratio: float = 0.75,
                          view_policy: str = "underside", jobs: int = 1):
    """Mine an adversarial dataset, sample a uniform control, train replicas on both.

    ``view_policy`` fixes the canonical mining split: "underside" observes
    every object from (jittered) below, which exposes shared-top structure;
    "seeded" draws one uniform viewpoint per element.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(out_dir / "manifest.json", ExperimentManifest(
        kind="toyset-AB", config=config,
        seeds=tuple(config.seed + r for r in range(replicas)),
        outputs={"summary": "summary.csv"},
    ))
    if view_policy == "underside":
        elements = [underside_split(obj, seed=mine_seed) for obj in objects]
    elif view_policy == "seeded":
        elements = [
            canonical_split(obj, ratio=split_ratio, seed=mine_seed + i)
            for i, obj in enumerate(objects)
        ]
    else:
        raise ValueError(f"unknown view policy {view_policy!r}")
    mining = mine_adversarial_subset(elements, toy_params, seed=mine_seed)
    stats = mined_statistic_gate(elements, mining, seed=mine_seed + 1)
    uniform = sample_uniform_subset(elements, toy_params.n, seed=mine_seed)

    cells = []
    keys = []
    for name, dataset in (("mined", mining.elements), ("uniform", uniform)):
        clouds = [e.gt_complete for e in dataset]
        for r in range(replicas):
            cfg = replace(config, seed=config.seed + r)
            run_id = f"{name}_r{r}"
            cells.append((cfg, clouds, out_dir / run_id, run_id))
            keys.append((name, r))
    results = _run_cells(cells, jobs)

    by_name: dict[str, list[float]] = {}
    rows = []
    for (name, r), (cd, _ms) in zip(keys, results):
        rows.append((name, str(r), cd, 0.0))
        by_name.setdefault(name, []).append(cd)
    for name, cds in by_name.items():
        rows.append((name, "mean", float(np.mean(cds)), float(np.std(cds))))

    with open(out_dir / "summary.csv", "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dataset", "replica", "final_cd_l2", "std"])
        for name, rep, cd, std in rows:
            writer.writerow([name, rep, format_float(cd), format_float(std)])
    return rows, stats


def _read_summary(path):
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        return header, list(reader)


def cmd_report(runs_dir, out_dir):
    """Aggregate every run below runs_dir into CSV + PNG charts."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    runs_dir = Path(runs_dir)
    out_dir = Path(out_dir)
    metric_files = sorted(runs_dir.rglob("metrics.csv"))
    summary_files = sorted(runs_dir.rglob("summary.csv"))
    if not metric_files and not summary_files:
        raise ValueError(f"nothing to report under {runs_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    skipped_total = 0
    aggregate = []
    for path in metric_files:
        try:
            rows, skipped = read_metrics_csv(path)
        except ValueError:
            skipped_total += 1
            continue
        skipped_total += skipped
        eval_rows = [r for r in rows if r["split"].startswith("eval")]
        if not eval_rows:
            continue
        final = max(eval_rows, key=lambda r: r["epoch"])
        run_name = path.parent.name
        aggregate.append((run_name, final["epoch"], final["cd_l2"], final["cd_l1"],
                          final["da_cd"], final["f1_1pct"]))

        fig, ax = plt.subplots(figsize=(6, 4))
        for split, style in (("train", "--"), ("eval", "-")):
            series = [(r["epoch"], r["cd_l2"]) for r in rows if r["split"] == split]
            if series:
                xs, ys = zip(*sorted(series))
                ax.plot(xs, ys, style, label=f"{split} cd_l2")
        log_path = path.parent / "train_log.csv"
        if log_path.exists():
            with open(log_path, newline="", encoding="ascii") as fh:
                reader = csv.DictReader(fh)
                series = []
                for rec in reader:
                    try:
                        series.append((int(rec["epoch"]), float(rec["train_loss"])))
                    except (KeyError, TypeError, ValueError):
                        skipped_total += 1
                if series:
                    xs, ys = zip(*sorted(series))
                    ax.plot(xs, ys, ":", label="train loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("value")
        ax.set_title(run_name)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_dir / f"curve_{run_name}.png", dpi=110)
        plt.close(fig)

    with open(out_dir / "aggregate.csv", "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run", "final_epoch", "cd_l2", "cd_l1", "da_cd", "f1_1pct"])
        for run_name, epoch, *metrics in aggregate:
            writer.writerow([run_name, epoch] + [format_float(m) for m in metrics])

    for path in summary_files:
        header, records = _read_summary(path)
        if header and header[:2] == ["alpha", "beta"]:
            cells = [(f"a={float(r[0]):g},b={float(r[1]):g}", float(r[3]))
                     for r in records if len(r) >= 4 and r[2] == "median"]
            if not cells:
                cells = [(f"a={float(r[0]):g},b={float(r[1]):g}", float(r[3]))
                         for r in records if len(r) >= 4]
            if cells:
                fig, ax = plt.subplots(figsize=(6, 4))
                labels, values = zip(*cells)
                ax.bar(range(len(values)), values)
                ax.set_xticks(range(len(values)), labels, rotation=30, ha="right")
                ax.set_ylabel("final eval cd_l2")
                ax.set_title(path.parent.name)
                fig.tight_layout()
                fig.savefig(out_dir / f"ablation_{path.parent.name}.png", dpi=110)
                plt.close(fig)

    return {"runs": len(aggregate), "skipped_rows": skipped_total}
