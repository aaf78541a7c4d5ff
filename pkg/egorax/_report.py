import csv
import dataclasses
import json
import math
import os
from typing import Any, Optional, Union


SCHEMA_VERSION = 1

_PathLike = Union[str, "os.PathLike[str]"]


def _clean(value: Any) -> Any:
    # JSON has no NaN or infinity; such values are written as strings.
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


@dataclasses.dataclass
class CheckEntry:
    """One measured quantity, optionally compared against a bound.

    `margin` is `bound − measured` for upper bounds; `passed` is `None` for pure
    measurements.
    """

    name: str
    measured: float
    bound: Optional[float] = None
    passed: Optional[bool] = None
    margin: Optional[float] = None
    inputs: dict = dataclasses.field(default_factory=dict)
    form: Optional[str] = None


@dataclasses.dataclass
class CheckReport:
    """A list of [`egorax.CheckEntry`][]s produced by one check."""

    name: str
    entries: list[CheckEntry] = dataclasses.field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed is not False for e in self.entries)

    def add(self, entry: CheckEntry) -> CheckEntry:
        self.entries.append(entry)
        return entry

    def max_measured(self) -> float:
        return max(e.measured for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "passed": self.passed,
            "entries": [dataclasses.asdict(e) for e in self.entries],
        }

    def save(self, path: _PathLike) -> None:
        write_json(path, self.to_dict())


@dataclasses.dataclass
class Gate:
    """A pass/fail verdict of a sweep. `verdict` is one of `"pass"`, `"fail"` or
    `"skipped"`.
    """

    name: str
    verdict: str
    detail: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in ("pass", "fail", "skipped"):
            raise ValueError(f"Unknown gate verdict '{self.verdict}'.")


@dataclasses.dataclass
class SweepReport:
    """The result of a sweep: one row per measurement, the gates evaluated over the
    rows, and the constants used by the gates.
    """

    name: str
    operation: str
    rows: list[dict] = dataclasses.field(default_factory=list)
    gates: list[Gate] = dataclasses.field(default_factory=list)
    constants: dict = dataclasses.field(default_factory=dict)
    extras: dict = dataclasses.field(default_factory=dict)
    # Not serialised: wall-clock times per job, and measures kept for plotting.
    timings: dict = dataclasses.field(default_factory=dict, repr=False)
    artifacts: dict = dataclasses.field(default_factory=dict, repr=False)

    @property
    def passed(self) -> bool:
        return all(g.verdict != "fail" for g in self.gates)

    @property
    def failed_rows(self) -> list[dict]:
        return [r for r in self.rows if r.get("status", "ok") != "ok"]

    def to_dict(self) -> dict:
        return _clean(
            {
                "schema_version": SCHEMA_VERSION,
                "name": self.name,
                "operation": self.operation,
                "passed": self.passed,
                "constants": self.constants,
                "gates": [dataclasses.asdict(g) for g in self.gates],
                "rows": self.rows,
                "extras": self.extras,
            }
        )

    def save_json(self, path: _PathLike) -> None:
        write_json(path, self.to_dict())

    def save_csv(self, path: _PathLike) -> None:
        columns = sorted({key for row in self.rows for key in row})
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(columns)
            for row in self.rows:
                writer.writerow([_csv_value(row.get(c)) for c in columns])


def _csv_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple, dict)):
        return json.dumps(_clean(value), sort_keys=True)
    return str(value)


def write_json(path: _PathLike, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(_clean(payload), f, indent=2, sort_keys=True)
        f.write("\n")
