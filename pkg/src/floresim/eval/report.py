"""Experiment reports, hardware reference annotations and pairwise comparison."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

HARDWARE_NOTE = "hardware measurement on a different robot; context only, not reproducible here"

# Hardware reference values by protocol. Never asserted by any test.
TURNING_REFERENCE = {0.5: (0.24, 0.646), 1.0: (0.18, 0.507), 1.5: (0.149, 0.418), 2.0: (0.139, 0.4)}
LATERAL_REFERENCE = (0.3614, 0.6995)
COURSE_TURN_RATIO = 0.70


def annotation(label: str, flores=None, baseline=None, note: str = "") -> dict:
    return {"label": label, "flores": flores, "baseline": baseline, "note": note,
            "hardware": True, "reproducible": False, "disclaimer": HARDWARE_NOTE}


def reference_annotations(protocol: str, params: dict) -> list[dict]:
    if protocol == "straight":
        return [annotation("straight-line CoT vs speed on paved, grass, discrete and gravel ground",
                           note="trend reference: hip-yaw robot lowest CoT on unstructured terrain")]
    if protocol == "lateral":
        f, b = LATERAL_REFERENCE
        return [annotation("lateral walking at 0.5 m/s", f, b)]
    if protocol == "circle":
        r = float(params.get("radius", 0.0))
        if r in TURNING_REFERENCE:
            f, b = TURNING_REFERENCE[r]
            return [annotation(f"circle radius {r} m at vx 0.4 m/s", f, b)]
        return [annotation(f"circle radius {r} m", note="no hardware value for this radius")]
    if protocol == "course":
        return [annotation("seven-turn course", note=f"hip-yaw robot CoT about "
                           f"{int(COURSE_TURN_RATIO * 100)}% of the baseline at each turn")]
    return []


@dataclass
class ExperimentReport:
    protocol: str
    params: dict
    morphology: str
    aggregate_cot: float | None
    cot_series: list[float] = field(default_factory=list)
    tracking: dict = field(default_factory=dict)
    path: dict = field(default_factory=dict)
    annotations: list[dict] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    seed: int = 0
    meta: dict = field(default_factory=dict)
    events: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.aggregate_cot is not None and self.aggregate_cot < 0:
            raise ValueError("aggregate CoT must be non-negative")

    @property
    def protocol_id(self) -> str:
        parts = [self.protocol] + [f"{k}={self.params[k]}" for k in sorted(self.params)]
        return ";".join(parts)

    @property
    def complete(self) -> bool:
        return "incomplete" not in self.flags

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        return cls(**json.loads(text))

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentReport":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class ComparisonRow:
    protocol_id: str
    morphology_a: str
    morphology_b: str
    cot_a: float | None
    cot_b: float | None
    ratio: float | None
    seed_a: int
    seed_b: int
    budget_a: object
    budget_b: object


def compare(a: ExperimentReport, b: ExperimentReport) -> ComparisonRow:
    """CoT ratio a / b for two runs of the same protocol."""
    if a.protocol_id != b.protocol_id:
        raise ValueError(f"cannot compare different protocols: {a.protocol_id!r} vs {b.protocol_id!r}")
    ratio = None
    if a.aggregate_cot is not None and b.aggregate_cot:
        ratio = a.aggregate_cot / b.aggregate_cot
    return ComparisonRow(a.protocol_id, a.morphology, b.morphology, a.aggregate_cot, b.aggregate_cot,
                         ratio, a.seed, b.seed, a.meta.get("train_iterations"),
                         b.meta.get("train_iterations"))


def compare_many(reports_a, reports_b) -> list[ComparisonRow]:
    """Pair reports by protocol id; protocols present on only one side are an error."""
    index_b = {r.protocol_id: r for r in reports_b}
    ids_a = {r.protocol_id for r in reports_a}
    if ids_a != set(index_b):
        raise ValueError(f"protocol sets differ: {sorted(ids_a ^ set(index_b))}")
    return [compare(r, index_b[r.protocol_id]) for r in reports_a]


def comparison_table(rows: list[ComparisonRow]) -> str:
    lines = ["protocol\tcot_a\tcot_b\tratio\tseed_a\tseed_b"]
    fmt = lambda v: "nan" if v is None else f"{v:.4f}"
    for r in rows:
        lines.append(f"{r.protocol_id}\t{fmt(r.cot_a)}\t{fmt(r.cot_b)}\t{fmt(r.ratio)}\t"
                     f"{r.seed_a}\t{r.seed_b}")
    return "\n".join(lines)
