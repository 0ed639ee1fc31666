"""Per-tick telemetry records and their fixed-column CSV form."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TELEMETRY_COLUMNS = (
    ["time"] + [f"tau_{k}" for k in range(16)] + [f"qd_{k}" for k in range(16)]
    + ["base_x", "base_y", "base_z", "speed", "heading", "vx_cmd", "vy_cmd", "wz_cmd"]
    + [f"contact_{k}" for k in range(4)]
)


@dataclass(frozen=True)
class TelemetryRecord:
    time: float
    torques: np.ndarray  # (16,)
    joint_velocities: np.ndarray  # (16,)
    base_position: np.ndarray  # (3,)
    speed: float  # horizontal base speed, body frame
    heading: float
    command: np.ndarray  # (3,)
    wheel_contact: np.ndarray  # (4,)

    def row(self) -> list[float]:
        return ([self.time, *self.torques, *self.joint_velocities, *self.base_position, self.speed,
                 self.heading, *self.command, *self.wheel_contact])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(np.asarray(self.row(), dtype=float))))


def telemetry_csv(records, header: dict | None = None) -> str:
    """CSV text; ``header`` entries become leading ``# key=value`` comment lines."""
    buf = io.StringIO()
    for k, v in (header or {}).items():
        buf.write(f"# {k}={v}\n")
    buf.write(",".join(TELEMETRY_COLUMNS) + "\n")
    for r in records:
        buf.write(",".join(repr(float(x)) for x in r.row()) + "\n")
    return buf.getvalue()


def write_telemetry(records, path: str | Path, header: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(telemetry_csv(records, header))
    return path


def read_telemetry(path: str | Path) -> list[TelemetryRecord]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    if lines[0].split(",") != TELEMETRY_COLUMNS:
        raise ValueError(f"{path} does not have the telemetry column layout")
    out = []
    for ln in lines[1:]:
        v = np.array([float(x) for x in ln.split(",")])
        out.append(TelemetryRecord(v[0], v[1:17], v[17:33], v[33:36], v[36], v[37], v[38:41], v[41:45]))
    return out
