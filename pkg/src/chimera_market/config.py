"""Pipeline configuration and its plain-text key = value file format."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .oscillator_sim import DEFAULT_ALPHA, SimParams
from .market_data import WindowSpec

SECTION = "pipeline"


@dataclass
class PipelineConfig:
    input: str | None = None
    input_format: str = "auto"
    start_date: str | None = None
    end_date: str | None = None
    output_dir: str = "output"
    window_width: int = 62
    window_step: int = 1
    omega: float = 0.0
    alpha: float = DEFAULT_ALPHA
    dt: float = 0.02
    transient_steps: int = 10_000
    measure_steps: int = 1_000
    seed: int = 0
    epsilon: float = 0.1
    neighbor_k: int = 10
    n_clusters: int = 3
    restarts: int = 10
    window_range: str | None = None
    histogram_bins: int = 20
    sectors: str | None = None
    workers: int = 1
    batch_size: int = 64
    dump_matrices: bool = False

    # fields that change how the work is scheduled, never what it produces
    SCHEDULING = ("output_dir", "workers", "batch_size")

    def validate(self) -> "PipelineConfig":
        checks = [
            (self.input_format in ("auto", "wide", "long"), "input_format must be auto, wide or long"),
            (self.window_width >= 2, "window_width must be >= 2"),
            (self.window_step >= 1, "window_step must be >= 1"),
            (self.dt > 0, "dt must be positive"),
            (self.transient_steps >= 0, "transient_steps must be >= 0"),
            (self.measure_steps >= 2, "measure_steps must be >= 2"),
            (self.epsilon > 0, "epsilon must be positive"),
            (self.neighbor_k >= 1, "neighbor_k must be >= 1"),
            (1 <= self.n_clusters <= 3, "n_clusters must be between 1 and 3"),
            (self.restarts >= 1, "restarts must be >= 1"),
            (self.histogram_bins >= 1, "histogram_bins must be >= 1"),
            (self.workers >= 1, "workers must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        self.window_bounds()
        return self

    def window_spec(self) -> WindowSpec:
        return WindowSpec(width=self.window_width, step=self.window_step)

    def sim_params(self) -> SimParams:
        return SimParams(
            omega=self.omega,
            alpha=self.alpha,
            dt=self.dt,
            transient_steps=self.transient_steps,
            measure_steps=self.measure_steps,
            seed=self.seed,
        )

    def window_bounds(self) -> tuple[int | None, int | None]:
        """Parse ``window_range`` ("start:stop", half-open, either side optional)."""
        if not self.window_range:
            return None, None
        parts = str(self.window_range).split(":")
        if len(parts) != 2:
            raise ConfigError(f"window_range must look like 'start:stop', got {self.window_range!r}")
        try:
            lo, hi = (int(p) if p.strip() else None for p in parts)
        except ValueError as exc:
            raise ConfigError(f"window_range bounds must be integers: {self.window_range!r}") from exc
        if lo is not None and hi is not None and hi <= lo:
            raise ConfigError("window_range stop must exceed start")
        return lo, hi

    def output_path(self) -> Path:
        return Path(self.output_dir)

    def as_dict(self, include_scheduling: bool = True) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        if not include_scheduling:
            for key in self.SCHEDULING:
                data.pop(key)
        return data

    def to_file(self, path) -> None:
        parser = configparser.ConfigParser()
        parser[SECTION] = {
            k: _format_value(v) for k, v in self.as_dict().items() if v is not None
        }
        with open(path, "w", encoding="utf-8") as fh:
            parser.write(fh)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        parser = configparser.ConfigParser()
        try:
            read = parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        if not read:
            raise ConfigError(f"config file not found: {path}")
        if parser.sections() != [SECTION]:
            raise ConfigError(f"config must contain exactly one [{SECTION}] section")
        return cls.from_mapping(dict(parser[SECTION]))

    @classmethod
    def from_mapping(cls, values: dict[str, Any], base: "PipelineConfig | None" = None) -> "PipelineConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        config = dataclasses.replace(base) if base is not None else cls()
        for key, raw in values.items():
            setattr(config, key, _parse_value(known[key], raw))
        return config.validate()


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_TYPES = {
    "input": str, "input_format": str, "start_date": str, "end_date": str,
    "output_dir": str, "window_range": str, "sectors": str,
    "window_width": int, "window_step": int, "transient_steps": int,
    "measure_steps": int, "seed": int, "neighbor_k": int, "n_clusters": int,
    "restarts": int, "histogram_bins": int, "workers": int, "batch_size": int,
    "omega": float, "alpha": float, "dt": float, "epsilon": float,
    "dump_matrices": bool,
}


def _parse_value(field: dataclasses.Field, raw):
    kind = _TYPES[field.name]
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none")):
        if field.default is None:
            return None
        raise ConfigError(f"{field.name} cannot be empty")
    if isinstance(raw, kind) and not (kind is int and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError as exc:
        raise ConfigError(f"invalid value for {field.name}: {raw!r}") from exc
