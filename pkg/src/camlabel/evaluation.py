"""Labeling quality: object count, trajectory precision/recall/F, exports, sweeps."""
from __future__ import annotations

import csv
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from pathlib import Path as FsPath
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .appearance import AppearanceModel
from .inference import InferenceConfig
from .observation import Label, Observation
from .runtime import LabelingResult, run_simulation
from .scenario import inject_missing
from .topology import Topology

Partition = Mapping[Hashable, set]


def partition(pairs: Iterable[tuple[Hashable, Hashable]]) -> dict[Hashable, set]:
    """Group ``(item, label)`` pairs into ``label -> {items}``."""
    out: dict[Hashable, set] = defaultdict(set)
    for item, label in pairs:
        out[label].add(item)
    return dict(out)


def estimated_count(result: LabelingResult) -> int:
    return len({r.label for r in result.records})


def precision_recall_f(est: Partition, truth: Partition) -> tuple[float, float, float]:
    """Trajectory precision, recall and their harmonic mean.

    Both sums run over the estimated sets and are averaged by their number:
    precision credits each estimated set with its best overlap fraction of
    itself, recall with its best overlap fraction of a true trajectory.
    """
    est_sets = [s for s in est.values() if s]
    if not est_sets:
        raise ValueError("estimated partition is empty")
    owner = {}
    sizes = {}
    for j, (key, members) in enumerate(truth.items()):
        sizes[j] = len(members)
        for m in members:
            owner[m] = j
    covered_est = set().union(*est_sets)
    if covered_est != set(owner):
        raise ValueError("partitions cover different observation sets")
    p_sum = r_sum = 0.0
    for members in est_sets:
        overlap = Counter(owner[m] for m in members)
        p_sum += max(overlap.values()) / len(members)
        r_sum += max(c / sizes[j] for j, c in overlap.items())
    k = len(est_sets)
    p, r = p_sum / k, r_sum / k
    f = 0.0 if p + r == 0 else 2.0 * p * r / (p + r)
    return p, r, f


def result_partitions(result: LabelingResult) -> tuple[dict, dict]:
    """(estimated, ground-truth) partitions over the kept observations' ids."""
    est = partition((r.observation.key, r.label) for r in result.records)
    truth_pairs = []
    for r in result.records:
        if r.observation.truth is None:
            raise ValueError("ground truth is required for scoring")
        truth_pairs.append((r.observation.key, r.observation.truth))
    return est, partition(truth_pairs)


@dataclass(frozen=True)
class Metrics:
    K: int
    K_true: int
    precision: float
    recall: float
    f_measure: float
    tau_d: float
    dropped: int

    def as_dict(self) -> dict:
        return {
            "K": self.K,
            "K_true": self.K_true,
            "precision": self.precision,
            "recall": self.recall,
            "f_measure": self.f_measure,
            "tau_d": self.tau_d,
            "dropped": self.dropped,
        }


def score(result: LabelingResult) -> Metrics:
    """Metrics over kept observations; gated ones are excluded from both partitions."""
    est, truth = result_partitions(result)
    if not est:
        return Metrics(0, 0, 0.0, 0.0, 0.0, result.tau_d, len(result.dropped))
    p, r, f = precision_recall_f(est, truth)
    return Metrics(len(est), len(truth), p, r, f, result.tau_d, len(result.dropped))


def metrics_report(metrics: Metrics, config: InferenceConfig, extra: Mapping | None = None) -> dict:
    report = {"metrics": metrics.as_dict(), "config": config_echo(config)}
    if extra:
        report.update(extra)
    return report


def config_echo(config: InferenceConfig) -> dict:
    return {
        "memory_depth": config.memory_depth,
        "space_cap": config.space_cap,
        "order": config.order,
        "lambda0": config.lambda0,
        "renormalize_truncation": config.renormalize_truncation,
        "false_alarm_threshold": config.false_alarm_threshold,
    }


# ----------------------------------------------------------------------------
# belief matrix


def belief_matrix(result: LabelingResult) -> tuple[list[Label], np.ndarray]:
    """Rows: observations in time order; columns: every label any belief ever held."""
    labels = sorted({lab for r in result.records for lab in r.belief.labels})
    col = {lab: i for i, lab in enumerate(labels)}
    mat = np.zeros((len(result.records), len(labels)))
    for i, r in enumerate(result.records):
        for lab, p in r.belief.support:
            mat[i, col[lab]] = p
    return labels, mat


def export_belief_matrix(result: LabelingResult, path: str | FsPath) -> None:
    labels, mat = belief_matrix(result)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["global_index", "camera", "local_index", *map(str, labels), "ground_truth"])
        for r, row in zip(result.records, mat):
            o = r.observation
            truth = "" if o.truth is None else str(o.truth)
            w.writerow([o.global_index, o.camera, o.local_index, *(f"{p:.12g}" for p in row), truth])


def read_belief_matrix(path: str | FsPath) -> tuple[list[str], list[tuple[int, int]], np.ndarray, list[str]]:
    """Parse an exported matrix: (label names, (camera, local_index) per row, values, truth column)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    names = header[3:-1]
    ids = [(int(r[1]), int(r[2])) for r in body]
    values = np.array([[float(x) for x in r[3:-1]] for r in body]).reshape(len(body), len(names))
    truth = [r[-1] for r in body]
    return names, ids, values, truth


# ----------------------------------------------------------------------------
# missing-detection sweep


@dataclass(frozen=True, eq=False)
class SweepCase:
    topology: Topology
    trace: Sequence[Observation]
    appearance: AppearanceModel


@dataclass(frozen=True)
class SweepRow:
    missing: int
    order: int
    mean_f: float
    std_f: float
    trials: int


def missing_sweep(
    cases: Sequence[SweepCase],
    deletion_counts: Sequence[int],
    config: InferenceConfig,
    orders: Sequence[int] = (0, 1),
    trials: int = 10,
    seed: int = 0,
) -> list[SweepRow]:
    """Mean F per (deletion count, order) over seeded random-deletion trials.

    Trial ``t`` uses case ``t % len(cases)``; both orders see the same
    deleted trace, so the comparison is paired.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not cases:
        raise ValueError("no sweep cases")
    scores: dict[tuple[int, int], list[float]] = defaultdict(list)
    for count in deletion_counts:
        for t in range(trials):
            case = cases[t % len(cases)]
            trace, _ = inject_missing(case.trace, count=count, seed=_trial_seed(seed, count, t))
            for q in orders:
                result = run_simulation(case.topology, trace, replace(config, order=q), case.appearance)
                scores[(count, q)].append(score(result).f_measure)
    rows = []
    for count in deletion_counts:
        for q in orders:
            fs = np.array(scores[(count, q)])
            rows.append(SweepRow(count, q, float(fs.mean()), float(fs.std()), len(fs)))
    return rows


def _trial_seed(seed: int, count: int, trial: int) -> int:
    return (seed * 1_000_003 + count * 1_009 + trial) % (2**32)


def write_sweep_csv(rows: Sequence[SweepRow], path: str | FsPath) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["missing", "order", "mean_f", "std_f", "trials"])
        for r in rows:
            w.writerow([r.missing, r.order, f"{r.mean_f:.12g}", f"{r.std_f:.12g}", r.trials])


def write_report(report: Mapping, path: str | FsPath) -> None:
    def default(o):
        if isinstance(o, float) and not math.isfinite(o):
            return str(o)
        raise TypeError(type(o))

    FsPath(path).write_text(json.dumps(report, indent=1, default=default))
