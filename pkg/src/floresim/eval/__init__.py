from .cot import DEFAULT_SPEED_FLOOR, UndefinedCoTError, cot, instantaneous_cot, positive_power
from .pid import HeadingController, PIDGains, PIDState, pid_heading, wrap_angle
from .protocols import (REFERENCE_RADII, SURFACE_TERRAIN, ProtocolSettings, as_policy, circle_target,
                        course_waypoints, detect_spikes, required_yaw_rate, rollout, run_circle,
                        run_course, run_lateral, run_straight_line, sweep_straight_line)
from .report import (ComparisonRow, ExperimentReport, compare, compare_many, comparison_table,
                     reference_annotations)
from .telemetry import (TELEMETRY_COLUMNS, TelemetryRecord, read_telemetry, telemetry_csv,
                        write_telemetry)
