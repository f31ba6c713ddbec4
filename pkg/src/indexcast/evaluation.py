"""Walk-forward evaluation, macro-F1 scoring, lambda sweep and ablations."""

import csv
import json
import logging
import time
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Optional

from .config import RunConfig, VARIANTS
from .errors import ForecastStageError, InputError
from .forecast import PipelineState, forecast_day

logger = logging.getLogger(__name__)

CLASSES = (1, -1)


def macro_f1(predictions, truth) -> float:
    """Unweighted mean of the rise-class and fall-class F-scores.

    A class absent from both predictions and truth contributes F = 1; a
    class whose precision + recall denominator is zero contributes F = 0.
    """
    predictions = list(predictions)
    truth = list(truth)
    if len(predictions) != len(truth):
        raise InputError("predictions and truth differ in length")
    if not predictions:
        raise InputError("empty label lists")
    bad = {v for v in (*predictions, *truth) if v not in (1, -1)}
    if bad:
        raise InputError(f"labels must be +1/-1, got {sorted(bad)}")
    scores = []
    for cls in CLASSES:
        tp = sum(1 for p, t in zip(predictions, truth) if p == cls and t == cls)
        fp = sum(1 for p, t in zip(predictions, truth) if p == cls and t != cls)
        fn = sum(1 for p, t in zip(predictions, truth) if p != cls and t == cls)
        if tp == 0 and fp == 0 and fn == 0:
            scores.append(1.0)
            continue
        precision = tp / (tp + fp) if (tp + fp) else 0.0
        recall = tp / (tp + fn) if (tp + fn) else 0.0
        if precision + recall == 0.0:
            scores.append(0.0)
        else:
            scores.append(2.0 * precision * recall / (precision + recall))
    return sum(scores) / len(scores)


@dataclass
class EvaluationReport:
    per_index: dict  # {index: {"macro_f1": float, "confusion": {...}}}
    mean_macro_f1: float
    days: list  # per-day records
    failures: list
    config_snapshot: dict
    seed: int
    audit: dict
    timings: dict = field(default_factory=dict)
    chosen_k_clusters: Optional[int] = None

    def to_dict(self, include_timings: bool = True) -> dict:
        payload = {
            "per_index": self.per_index,
            "mean_macro_f1": self.mean_macro_f1,
            "days": self.days,
            "failures": self.failures,
            "config": self.config_snapshot,
            "seed": self.seed,
            "audit": self.audit,
            "chosen_k_clusters": self.chosen_k_clusters,
        }
        if include_timings:
            payload["timings"] = self.timings
        return payload

    def to_json(self, include_timings: bool = True) -> str:
        return json.dumps(self.to_dict(include_timings), indent=2, sort_keys=True)

    def deterministic_json(self) -> str:
        """Serialization with wall-clock fields stripped, for replay checks."""
        payload = self.to_dict(include_timings=False)
        for day in payload["days"]:
            day["diagnostics"] = {
                k: v for k, v in day["diagnostics"].items() if k != "timings"
            }
        return json.dumps(payload, indent=2, sort_keys=True)


def _test_days(state: PipelineState, config: RunConfig) -> list:
    if config.test_start is None or config.test_end is None:
        raise InputError("config must set test_start and test_end")
    days = [d for d in state.calendar if config.test_start <= d <= config.test_end]
    if not days:
        raise InputError(
            f"no trading days between {config.test_start} and {config.test_end}"
        )
    return days


def walk_forward(
    config: RunConfig, state: Optional[PipelineState] = None
) -> EvaluationReport:
    """Per-day retrain-and-forecast over the configured test range."""
    started = time.perf_counter()
    if state is None:
        state = PipelineState.from_config(config)
    else:
        state.reset_runtime(config)
    config = state.config

    chosen_k = None
    if config.sweep_k_clusters:
        chosen_k = _select_k_clusters(state, config)
        config = replace(config, k_clusters=chosen_k, sweep_k_clusters=False)
        state.reset_runtime(config)

    days = _test_days(state, config)
    per_index_pairs = {ix.index_id: [] for ix in state.manifest.indices}
    day_records = []
    failures = []
    for day in days:
        try:
            forecast = forecast_day(state, day)
        except ForecastStageError as e:
            logger.warning("day %s failed: %s", day, e)
            failures.append({"day": day.isoformat(), "stage": e.stage, "error": str(e.cause)})
            continue
        realized = {
            ix: state.realized_index_movement(ix, day, day)
            for ix in forecast.index_labels
        }
        for ix, label in forecast.index_labels.items():
            per_index_pairs[ix].append((label, realized[ix]))
        day_records.append(
            {
                "day": day.isoformat(),
                "index_labels": dict(sorted(forecast.index_labels.items())),
                "realized": dict(sorted(realized.items())),
                "seed_labels": dict(sorted(forecast.seed_labels.labels.items())),
                "diagnostics": forecast.diagnostics,
            }
        )

    per_index = {}
    f1_values = []
    for ix, pairs in sorted(per_index_pairs.items()):
        if not pairs:
            per_index[ix] = {"macro_f1": None, "confusion": {}, "evaluated_days": 0}
            continue
        preds = [p for p, _ in pairs]
        truths = [t for _, t in pairs]
        confusion = {
            "rise_rise": sum(1 for p, t in pairs if p == 1 and t == 1),
            "rise_fall": sum(1 for p, t in pairs if p == 1 and t == -1),
            "fall_rise": sum(1 for p, t in pairs if p == -1 and t == 1),
            "fall_fall": sum(1 for p, t in pairs if p == -1 and t == -1),
        }
        value = macro_f1(preds, truths)
        per_index[ix] = {
            "macro_f1": value,
            "confusion": confusion,
            "evaluated_days": len(pairs),
        }
        f1_values.append(value)

    audit = state.audit.summary()
    if audit["violations"]:
        raise InputError(f"lookahead audit violations: {audit['violations'][:3]}")
    return EvaluationReport(
        per_index=per_index,
        mean_macro_f1=sum(f1_values) / len(f1_values) if f1_values else 0.0,
        days=day_records,
        failures=failures,
        config_snapshot=config.snapshot(),
        seed=config.seed,
        audit=audit,
        timings={"wall_clock_seconds": time.perf_counter() - started},
        chosen_k_clusters=chosen_k,
    )


def _select_k_clusters(state: PipelineState, config: RunConfig) -> int:
    """Pick k by mean macro-F1 over the validation days before the test range."""
    days = _test_days(state, config)
    first_idx = state.day_index(days[0])
    if first_idx < config.validation_days:
        raise InputError("not enough days before the test range to tune k_clusters")
    val_days = state.calendar[first_idx - config.validation_days : first_idx]
    best_k, best_f1 = None, -1.0
    for k in config.k_cluster_candidates:
        candidate = replace(
            config,
            k_clusters=k,
            sweep_k_clusters=False,
            test_start=val_days[0],
            test_end=val_days[-1],
        )
        report = walk_forward(candidate, state=state)
        logger.info("k_clusters sweep: k=%d mean_macro_f1=%.4f", k, report.mean_macro_f1)
        if report.mean_macro_f1 > best_f1 + 1e-12:
            best_k, best_f1 = k, report.mean_macro_f1
    return best_k


def lambda_sweep(config: RunConfig, lambda_values, state: Optional[PipelineState] = None) -> dict:
    """One walk-forward per lambda with shared data, frames, and relation cache."""
    values = list(lambda_values)
    if not values:
        raise InputError("empty lambda sweep")
    for lam in values:
        if not 0.0 < lam < 1.0:
            raise InputError(f"lambda {lam} outside (0,1); use 0.01 / 0.99 for endpoints")
    if state is None:
        state = PipelineState.from_config(config)
    rows = []
    reports = {}
    for lam in values:
        report = walk_forward(replace(config, blend_lambda=lam), state=state)
        reports[lam] = report
        row = {"lambda": lam, "mean_macro_f1": report.mean_macro_f1}
        for ix, stats in sorted(report.per_index.items()):
            row[f"macro_f1_{ix}"] = stats["macro_f1"]
        rows.append(row)
    return {"rows": rows, "reports": reports}


def write_sweep_csv(sweep: dict, path) -> None:
    rows = sweep["rows"]
    fields = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def ablation_run(
    config: RunConfig, variant: str, state: Optional[PipelineState] = None
) -> EvaluationReport:
    if variant not in VARIANTS:
        raise InputError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    return walk_forward(replace(config, variant=variant), state=state)
