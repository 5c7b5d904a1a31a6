"""Run configuration, check records and the JSON report format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import jsonschema
import numpy as np

SCHEMA_ID = "ewlab-report-v1"

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_GATE = 0, 1, 2, 3

# tolerance classes; "--tol" overrides the primary class of a command
DEFAULT_TOLERANCES = {
    "ew": 1e-6,
    "toda": 1e-8,
    "harmonic": 1e-8,
    "harmonic_fd": 1e-6,
    "eigen": 1e-8,
    "height": 1e-9,
    "joyce": 1e-8,
    "ewcurv": 1e-6,
    "dg": 1e-8,
    "crosscheck": 1e-8,
    "quotient": 1e-7,
    "coarse": 1e-5,
    "killing_gate": 1e-6,
    "killing_gate_fd": 1e-4,
    "obstruction": 1e-6,
    "congruence": 1e-6,
    "loop": 1e-6,
    "gap": 1e-5,
}


class ConfigError(ValueError):
    """Invalid run configuration (exit status 2)."""


@dataclass
class RunConfig:
    space: Optional[str] = None
    params: dict = field(default_factory=dict)
    u: Optional[str] = None
    V: Optional[str] = None
    domain: dict = field(default_factory=dict)
    probes: int = 100
    seed: int = 0
    fd_step: float = 1e-3
    derivatives: str = "auto"
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    output_format: str = "text"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.probes < 1:
            raise ConfigError("probe count must be at least 1")
        if not self.fd_step > 0:
            raise ConfigError("FD step must be positive")
        if self.derivatives not in ("auto", "fd", "exact"):
            raise ConfigError(f"unknown derivative mode {self.derivatives!r}")
        if self.output_format not in ("text", "json"):
            raise ConfigError(f"unknown format {self.output_format!r}")
        for k, v in self.tolerances.items():
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ConfigError(f"tolerance {k} must be positive, got {v!r}")
        given = [n for n in ("space", "u", "V") if getattr(self, n) is not None]
        if len(given) > 1:
            raise ConfigError(f"choose one of --space, --u, --V (got {', '.join(given)})")
        for name, iv in self.domain.items():
            if len(iv) != 2 or not iv[0] < iv[1]:
                raise ConfigError(f"domain override for {name} must be an interval lo:hi with lo < hi")

    def tol(self, cls):
        return float(self.tolerances[cls])

    def echo(self):
        return {
            "space": self.space,
            "params": {k: float(v) for k, v in sorted(self.params.items())},
            "u": self.u,
            "V": self.V,
            "domain": {k: [float(a), float(b)] for k, (a, b) in sorted(self.domain.items())},
            "probes": int(self.probes),
            "seed": int(self.seed),
            "fd_step": float(self.fd_step),
            "derivatives": self.derivatives,
            "tolerances": {k: float(v) for k, v in sorted(self.tolerances.items())},
        }


@dataclass
class Check:
    name: str
    status: str
    points: int
    max_abs: Optional[float]
    mean_abs: Optional[float]
    tolerance: Optional[float]
    note: str = ""

    @property
    def passed(self):
        return {"pass": True, "fail": False}.get(self.status)

    def as_dict(self):
        out = {
            "name": self.name,
            "status": self.status,
            "points": int(self.points),
            "max_abs": _num(self.max_abs),
            "mean_abs": _num(self.mean_abs),
            "tolerance": _num(self.tolerance),
            "pass": self.passed,
        }
        if self.note:
            out["note"] = self.note
        return out


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def measure(name, values, tolerance, note=""):
    """Check record from per-point residuals (any shape; leading axis = points)."""
    a = np.abs(np.asarray(values, dtype=float))
    if a.ndim == 0:
        a = a[None]
    per_point = a.reshape(a.shape[0], -1).max(axis=1) if a.size else a
    mx = float(np.max(per_point)) if per_point.size else 0.0
    mean = float(np.mean(per_point)) if per_point.size else 0.0
    ok = bool(mx < tolerance) and math.isfinite(mx)
    return Check(name, "pass" if ok else "fail", per_point.shape[0], mx, mean, tolerance, note)


def info(name, values, note=""):
    a = np.abs(np.asarray(values, dtype=float)).reshape(-1)
    return Check(name, "info", a.size, float(a.max()) if a.size else None, float(a.mean()) if a.size else None, None, note)


def gated(name, reason):
    return Check(name, "gated", 0, None, None, None, reason)


@dataclass
class Report:
    command: str
    config: RunConfig
    checks: list = field(default_factory=list)
    structure_count: Optional[dict] = None
    notes: list = field(default_factory=list)
    wall_time_ms: float = 0.0
    config_error: bool = False

    def add(self, check):
        self.checks.append(check)
        return check

    @property
    def exit_code(self):
        if self.config_error:
            return EXIT_CONFIG
        statuses = [c.status for c in self.checks]
        if "fail" in statuses:
            return EXIT_FAIL
        if "gated" in statuses:
            return EXIT_GATE
        return EXIT_PASS

    @property
    def passed(self):
        return self.exit_code == EXIT_PASS

    def as_dict(self):
        return {
            "schema": SCHEMA_ID,
            "command": self.command,
            "config": self.config.echo(),
            "checks": [c.as_dict() for c in self.checks],
            "structure_count": self.structure_count,
            "notes": list(self.notes),
            "passed": self.passed,
            "exit_code": self.exit_code,
            "wall_time_ms": round(float(self.wall_time_ms), 3),
        }

    def to_json(self, wall_time=True):
        d = self.as_dict()
        if not wall_time:
            d["wall_time_ms"] = 0.0
        validate_report(d)
        return json.dumps(d, indent=2)

    def to_text(self):
        lines = [f"ewlab {self.command}"]
        for c in self.checks:
            mx = "-" if c.max_abs is None else f"{c.max_abs:.3e}"
            tol = "-" if c.tolerance is None else f"{c.tolerance:.1e}"
            line = f"  {c.status.upper():5s} {c.name:28s} max {mx:>10s}  tol {tol:>7s}  n={c.points}"
            if c.note:
                line += f"  ({c.note})"
            lines.append(line)
        sc = self.structure_count
        if sc is not None:
            lines.append(
                f"  structures: upper_bound {sc['upper_bound']}, confirmed {sc['confirmed']}, "
                f"loop residual {sc['loop_residual']:.2e}, gap {sc.get('gap', float('nan')):.2e}"
            )
        lines.extend(f"  note: {n}" for n in self.notes)
        lines.append(f"  exit {self.exit_code} ({self.wall_time_ms:.0f} ms)")
        return "\n".join(lines)


def load_schema():
    return json.loads(resources.files("ewlab").joinpath("report.schema.json").read_text())


def validate_report(d):
    jsonschema.validate(d, load_schema())
