"""Run statistics, confusion-matrix metrics, and the deployment cost model."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

Range = tuple[float, float]


@dataclass
class RunStats:
    """Counters accumulated over one replay or serve session."""

    frames_processed: int = 0
    persons_tracked: int = 0
    triggers_fired: int = 0
    vlm_calls: int = 0
    skips: int = 0
    retries: int = 0
    expired: int = 0
    exhausted: int = 0
    dropped: int = 0
    alerts_by_category: dict[str, int] = field(default_factory=dict)

    @property
    def reduction_factor(self) -> float:
        return self.frames_processed / max(self.vlm_calls, 1)

    def to_dict(self) -> dict:
        return {
            "frames_processed": self.frames_processed,
            "persons_tracked": self.persons_tracked,
            "triggers_fired": self.triggers_fired,
            "vlm_calls": self.vlm_calls,
            "skips": self.skips,
            "retries": self.retries,
            "expired": self.expired,
            "exhausted": self.exhausted,
            "dropped": self.dropped,
            "alerts_by_category": dict(sorted(self.alerts_by_category.items())),
            "reduction_factor": round(self.reduction_factor, 4),
        }


def _ratio(num: float, den: float) -> Optional[float]:
    return num / den if den > 0 else None


def confusion_metrics(tp: int, fp: int, tn: int, fn: int) -> dict[str, Optional[float]]:
    """Standard binary metrics; undefined denominators yield None, never 0."""
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    specificity = _ratio(tn, tn + fp)
    accuracy = _ratio(tp + tn, tp + fp + tn + fn)
    f1 = None
    if precision is not None and recall is not None and precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    return {
        "precision": precision,
        "recall": recall,
        "specificity": specificity,
        "accuracy": accuracy,
        "f1": f1,
    }


def _as_range(value: Union[float, Range]) -> Range:
    if isinstance(value, (tuple, list)):
        lo, hi = value
        return float(lo), float(hi)
    return float(value), float(value)


@dataclass
class CostParams:
    """Monthly infrastructure cost inputs for one store.

    The GPU share formula gives the point estimate for self-hosted VLM
    serving; db/network/vlm monthly figures are (low, high) ranges (scalars
    accepted) so the total reproduces published low/high bounds.
    """

    gpu_usd_per_hr: float = 0.40
    hours_per_day: float = 12.0
    days_per_month: float = 30.0
    stores_sharing: int = 10
    db_usd_month: Union[float, Range] = (5.0, 15.0)
    network_usd_month: Union[float, Range] = (5.0, 10.0)
    vlm_usd_month: Union[float, Range] = (20.0, 60.0)

    def __post_init__(self):
        if self.stores_sharing < 1:
            raise ValueError("stores_sharing must be >= 1")
        for name in ("gpu_usd_per_hr", "hours_per_day", "days_per_month"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def cost_model(params: CostParams) -> dict:
    """Per-store monthly cost breakdown.

    vlm_per_store is the shared-GPU point estimate
    gpu_usd_per_hr * hours_per_day * days_per_month / stores_sharing; the
    component ranges are summed into total_low/total_high.
    """
    vlm_per_store = (
        params.gpu_usd_per_hr * params.hours_per_day * params.days_per_month
        / params.stores_sharing
    )
    components = {
        "vlm": _as_range(params.vlm_usd_month),
        "db": _as_range(params.db_usd_month),
        "network": _as_range(params.network_usd_month),
    }
    total_low = sum(lo for lo, _ in components.values())
    total_high = sum(hi for _, hi in components.values())
    return {
        "vlm_per_store": round(vlm_per_store, 2),
        "components": {k: [lo, hi] for k, (lo, hi) in components.items()},
        "total_low": round(total_low, 2),
        "total_high": round(total_high, 2),
    }


def call_volume_projection(
    calls_per_hour_low: float,
    calls_per_hour_high: float,
    hours_per_day: float,
    days: float,
) -> tuple[float, float]:
    """Monthly VLM call count range from an hourly rate range."""
    return (
        calls_per_hour_low * hours_per_day * days,
        calls_per_hour_high * hours_per_day * days,
    )
