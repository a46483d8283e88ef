"""Pearson correlation with percentile bootstrap intervals over problems."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

BEHAVIOR_COLUMNS = ("problem_id", "p_one_hand_lab", "mean_judgment_online", "n_lab", "n_online")
TARGETS = ("lab", "online")


@dataclass(frozen=True)
class BehavioralRecord:
    problem: int
    p_one_hand_lab: Optional[float]
    mean_judgment_online: Optional[float]
    n_lab: Optional[int] = None
    n_online: Optional[int] = None

    def __post_init__(self):
        for name in ("p_one_hand_lab", "mean_judgment_online"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"problem {self.problem}: {name} = {v} outside [0, 1]")

    def target(self, which: str) -> Optional[float]:
        if which == "lab":
            return self.p_one_hand_lab
        if which == "online":
            return self.mean_judgment_online
        raise ValueError(f"unknown target series {which!r}")


def _opt(text: str, cast):
    text = text.strip()
    return cast(text) if text else None


def load_behavior(path: Union[str, Path]) -> Dict[int, BehavioralRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != BEHAVIOR_COLUMNS:
            raise ValueError(f"{path}: expected header {','.join(BEHAVIOR_COLUMNS)}")
        out: Dict[int, BehavioralRecord] = {}
        for row in reader:
            pid = int(row["problem_id"])
            if pid in out:
                raise ValueError(f"{path}: duplicate problem id {pid}")
            out[pid] = BehavioralRecord(pid, _opt(row["p_one_hand_lab"], float),
                                        _opt(row["mean_judgment_online"], float),
                                        _opt(row["n_lab"], int), _opt(row["n_online"], int))
    return out


def pearson(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """Pearson r, or None when either series has zero variance."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("series must have equal length >= 2")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def _pearson_rows(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Row-wise Pearson r of two (B, n) arrays; NaN where undefined."""
    dx = X - X.mean(axis=1, keepdims=True)
    dy = Y - Y.mean(axis=1, keepdims=True)
    sxx = np.einsum("ij,ij->i", dx, dx)
    syy = np.einsum("ij,ij->i", dy, dy)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.einsum("ij,ij->i", dx, dy) / np.sqrt(sxx * syy)
    r[(sxx == 0) | (syy == 0)] = np.nan
    return np.clip(r, -1.0, 1.0)


def bootstrap_indices(n: int, iterations: int, seed: int) -> np.ndarray:
    """Problem indices resampled with replacement, one row per replicate."""
    rng = np.random.default_rng(seed)
    return rng.integers(0, n, size=(iterations, n))


@dataclass(frozen=True)
class CorrelationReport:
    variant: str
    target: str
    r: Optional[float]
    low: Optional[float]
    high: Optional[float]
    n: int
    iterations: int
    undefined_replicates: int = 0

    def row(self) -> Dict[str, object]:
        def fmt(v):
            return "undefined" if v is None else repr(float(v))
        return {"variant": self.variant, "target": self.target, "pearson_r": fmt(self.r),
                "ci_low": fmt(self.low), "ci_high": fmt(self.high), "n_problems": self.n,
                "iterations": self.iterations, "undefined_replicates": self.undefined_replicates}


def correlate(variant: str, target: str, pred: Sequence[float], obs: Sequence[float],
              idx: np.ndarray) -> Tuple[CorrelationReport, np.ndarray]:
    """Point estimate, percentile 95% interval and the replicate r values."""
    pred = np.asarray(pred, float)
    obs = np.asarray(obs, float)
    r = pearson(pred, obs)
    reps = _pearson_rows(pred[idx], obs[idx])
    ok = reps[~np.isnan(reps)]
    low = high = None
    if r is not None and ok.size:
        low, high = (float(v) for v in np.percentile(ok, [2.5, 97.5]))
        low, high = min(low, r), max(high, r)
    rep = CorrelationReport(variant, target, r, low, high, len(pred), idx.shape[0], int(reps.size - ok.size))
    return rep, reps


def pairwise_pvalues(reps: Mapping[str, np.ndarray]) -> List[Dict[str, object]]:
    """One-sided bootstrap p-values: the fraction of replicates in which
    variant A's r does not exceed variant B's (small values favour A)."""
    rows = []
    names = sorted(reps)
    for a in names:
        for b in names:
            if a == b:
                continue
            ra, rb = reps[a], reps[b]
            ok = ~(np.isnan(ra) | np.isnan(rb))
            p = float(np.mean(ra[ok] <= rb[ok])) if ok.any() else None
            rows.append({"variant_a": a, "variant_b": b, "p_one_sided": "undefined" if p is None else repr(p),
                         "replicates": int(ok.sum())})
    return rows


def compare(predictions: Mapping[str, Mapping[int, Optional[float]]], behavior: Mapping[int, BehavioralRecord],
            iterations: int = 10000, seed: int = 0):
    """Correlate every variant's predictions with both behavioral series.

    Returns (reports, pairwise p-value rows).  Problems are matched by id;
    those without a prediction or a target value are dropped per comparison.
    """
    if iterations <= 0:
        raise ValueError("iterations must be positive")
    for variant, preds in predictions.items():
        missing = sorted(set(preds) - set(behavior))
        if missing:
            raise ValueError(f"{variant}: problem ids without behavioral data: {missing}")
    reports: List[CorrelationReport] = []
    prows: List[Dict[str, object]] = []
    for target in TARGETS:
        # one shared resampling per target series so variants are compared on equal footing
        common = sorted(pid for pid in behavior if behavior[pid].target(target) is not None
                        and all(preds.get(pid) is not None for preds in predictions.values()))
        reps: Dict[str, np.ndarray] = {}
        for variant in sorted(predictions):
            preds = predictions[variant]
            if len(common) < 3:
                raise ValueError(f"{variant}/{target}: need at least 3 matched problems, have {len(common)}")
            idx = bootstrap_indices(len(common), iterations, seed)
            x = [preds[pid] for pid in common]
            y = [behavior[pid].target(target) for pid in common]
            rep, reps[variant] = correlate(variant, target, x, y, idx)
            reports.append(rep)
        for row in pairwise_pvalues(reps):
            prows.append({"target": target, **row})
    return reports, prows
