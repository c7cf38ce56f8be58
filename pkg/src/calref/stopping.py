"""Epoch-by-epoch stopping-metric tracker and policy comparison.

Every metric is stored "lower is better" (accuracy and AUROC are negated at
record time), so best-epoch selection is a plain argmin with earliest-epoch
tie-breaking.  Metrics are computed eagerly when an epoch is recorded;
retaining the raw predictions is optional and only needed to compare policies
on held-out data afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .calibrate import apply_temperature, fit_temperature
from .decompose import binned_ece, cv_refinement, refinement_estimate, EstimatorKind
from .errors import ValidationError
from .scores import LossKind, PredictionSet, accuracy, auroc_ovr, empirical_risk

STOPPING_METRICS = (
    "logloss",
    "brier",
    "neg-accuracy",
    "neg-auroc",
    "ts-refinement-logloss",
    "ts-refinement-brier",
    "cv-ts-refinement-logloss",
)

METRIC_ALIASES = {
    "accuracy": "neg-accuracy",
    "auroc": "neg-auroc",
    "ts-refinement": "ts-refinement-logloss",
    "cv-ts-refinement": "cv-ts-refinement-logloss",
}


def canonical_metric(name: str) -> str:
    key = name.strip().lower()
    key = METRIC_ALIASES.get(key, key)
    if key not in STOPPING_METRICS:
        raise ValidationError(f"unknown stopping metric {name!r}")
    return key


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    metrics: dict[str, float]


@dataclass(frozen=True)
class PolicyRow:
    """Test metrics at the epoch chosen by one stopping metric, raw and after
    temperature scaling fitted on that epoch's validation predictions."""

    stopping_metric: str
    epoch: int
    logloss: float
    brier: float
    accuracy: float
    ece: float
    logloss_ts: float
    brier_ts: float
    accuracy_ts: float
    ece_ts: float


@dataclass(frozen=True)
class StoppingReport:
    best_epochs: dict[str, int]
    best_values: dict[str, float]
    rows: tuple[PolicyRow, ...] = ()


class EpochTracker:
    """Single-writer tracker; epochs must be recorded in increasing order."""

    def __init__(
        self,
        smoothing: bool = True,
        cv_folds: int = 5,
        cv_seed: int = 0,
        retain_predictions: bool = False,
    ):
        self.smoothing = smoothing
        self.cv_folds = cv_folds
        self.cv_seed = cv_seed
        self.retain_predictions = retain_predictions
        self.records: list[EpochRecord] = []
        self._k: int | None = None
        self._predictions: dict[int, PredictionSet] = {}

    def record_epoch(self, epoch: int, data: PredictionSet) -> EpochRecord:
        if self.records and epoch <= self.records[-1].epoch:
            raise ValidationError(
                f"epoch {epoch} not greater than last recorded {self.records[-1].epoch}"
            )
        if self._k is not None and data.k != self._k:
            raise ValidationError(f"epoch {epoch} has k={data.k}, previous epochs had k={self._k}")
        metrics = {
            "logloss": empirical_risk(LossKind.LOGLOSS, data),
            "brier": empirical_risk(LossKind.BRIER, data),
            "neg-accuracy": -accuracy(data),
            "neg-auroc": -auroc_ovr(data),
            "ts-refinement-logloss": refinement_estimate(
                data, LossKind.LOGLOSS, EstimatorKind.TS, smoothing=self.smoothing
            ),
            "ts-refinement-brier": refinement_estimate(
                data, LossKind.BRIER, EstimatorKind.TS, smoothing=self.smoothing
            ),
            "cv-ts-refinement-logloss": cv_refinement(
                data,
                LossKind.LOGLOSS,
                folds=self.cv_folds,
                seed=self.cv_seed,
                smoothing=self.smoothing,
            ),
        }
        record = EpochRecord(epoch=epoch, metrics=metrics)
        self.records.append(record)
        self._k = data.k
        if self.retain_predictions:
            self._predictions[epoch] = data
        return record

    def best_epoch(self, metric: str) -> int:
        if not self.records:
            raise ValidationError("no epochs recorded")
        key = canonical_metric(metric)
        best = min(self.records, key=lambda rec: (rec.metrics[key], rec.epoch))
        return best.epoch

    def best_value(self, metric: str) -> float:
        if not self.records:
            raise ValidationError("no epochs recorded")
        key = canonical_metric(metric)
        return min((rec.metrics[key], rec.epoch) for rec in self.records)[0]

    def report(self) -> StoppingReport:
        best = {m: self.best_epoch(m) for m in STOPPING_METRICS}
        vals = {m: self.best_value(m) for m in STOPPING_METRICS}
        return StoppingReport(best_epochs=best, best_values=vals)

    def compare_policies(self, test_sets: Mapping[int, PredictionSet]) -> StoppingReport:
        """Cross table: per stopping metric, test logloss/brier/accuracy/ECE at
        its chosen epoch, raw and after TS fitted on that epoch's validation
        predictions."""
        if not self.retain_predictions:
            raise ValidationError("compare_policies requires retain_predictions=True")
        missing = [r.epoch for r in self.records if r.epoch not in test_sets]
        if missing:
            raise ValidationError(f"missing test predictions for epochs {missing}")
        base = self.report()
        rows = []
        for metric in STOPPING_METRICS:
            epoch = base.best_epochs[metric]
            test = test_sets[epoch]
            cal = fit_temperature(self._predictions[epoch], LossKind.LOGLOSS, smoothing=self.smoothing)
            scaled = test.replace_probs(apply_temperature(cal, test.probs))
            rows.append(
                PolicyRow(
                    stopping_metric=metric,
                    epoch=epoch,
                    logloss=empirical_risk(LossKind.LOGLOSS, test),
                    brier=empirical_risk(LossKind.BRIER, test),
                    accuracy=accuracy(test),
                    ece=binned_ece(test),
                    logloss_ts=empirical_risk(LossKind.LOGLOSS, scaled),
                    brier_ts=empirical_risk(LossKind.BRIER, scaled),
                    accuracy_ts=accuracy(scaled),
                    ece_ts=binned_ece(scaled),
                )
            )
        return StoppingReport(best_epochs=base.best_epochs, best_values=base.best_values, rows=tuple(rows))
