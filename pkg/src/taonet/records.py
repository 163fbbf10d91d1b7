"""Per-sample prediction records and their JSONL wire form."""

from __future__ import annotations

from dataclasses import dataclass

from .detector import ScoreBreakdown

ROUTE_ID = "ID"
ROUTE_OOD = "OOD"


@dataclass
class PredictionRecord:
    sample_id: str
    route: str                              # ID | OOD (stage-one decision)
    label: str
    breakdown: ScoreBreakdown | None = None
    distribution: dict[str, float] | None = None  # ID-branch class probabilities
    raw_text: str | None = None                   # OOD-branch generation, for audit

    def to_json(self) -> dict:
        scores = None
        if self.breakdown is not None:
            scores = {
                "residual_raw": self.breakdown.residual_raw,
                "smoothness_raw": self.breakdown.smoothness_raw,
                "residual_norm": self.breakdown.residual_norm,
                "smoothness_norm": self.breakdown.smoothness_norm,
                "hybrid": self.breakdown.hybrid,
                "is_ood": self.breakdown.is_ood,
            }
        return {"id": self.sample_id, "route": self.route, "label": self.label,
                "scores": scores, "distribution": self.distribution,
                "raw_text": self.raw_text}

    @classmethod
    def from_json(cls, obj: dict) -> "PredictionRecord":
        breakdown = None
        if obj.get("scores") is not None:
            s = obj["scores"]
            breakdown = ScoreBreakdown(
                residual_raw=s["residual_raw"],
                smoothness_raw=s["smoothness_raw"],
                residual_norm=s["residual_norm"],
                smoothness_norm=s["smoothness_norm"],
                hybrid=s["hybrid"], is_ood=s["is_ood"])
        return cls(sample_id=obj["id"], route=obj["route"], label=obj["label"],
                   breakdown=breakdown, distribution=obj.get("distribution"),
                   raw_text=obj.get("raw_text"))
