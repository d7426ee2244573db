"""Whole-pipeline configuration with a flat key=value file format."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .projection import ProjectionConfig


@dataclass
class PipelineConfig:
    g_scale: float = 0.05
    g_size: float = 25.0
    g_step: float = 25.0
    cell_side: float = 400.0
    completion_iterations: int = 3
    kernel: int = 3
    label_strategy: str = "majority"
    probe_scales: tuple[float, ...] = (0.01, 0.02, 0.03, 0.04)
    input: str = ""
    output: str = ""
    rng_seed: int = 0
    jobs: int = 1

    def validate(self) -> None:
        self.projection().validate()
        if self.label_strategy not in ("majority", "max-id"):
            raise ValueError(f"unknown label strategy {self.label_strategy!r}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if not self.probe_scales or any(s <= 0 for s in self.probe_scales):
            raise ValueError("probe_scales must be positive")

    def projection(self) -> ProjectionConfig:
        return ProjectionConfig(
            g_scale=self.g_scale,
            g_size=self.g_size,
            g_step=self.g_step,
            cell_side=self.cell_side,
            completion_iterations=self.completion_iterations,
            kernel=self.kernel,
        )

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def serialize(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.serialize(), encoding="utf-8")

    @classmethod
    def parse(cls, text: str) -> "PipelineConfig":
        known = {f.name: f for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key=value, got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in known:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
            values[key] = _coerce(key, value, cls())
        return cls(**values)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.parse(Path(path).read_text(encoding="utf-8"))


def _coerce(key: str, value: str, defaults: PipelineConfig):
    template = getattr(defaults, key)
    if isinstance(template, bool):
        return value.lower() in ("1", "true", "yes")
    if isinstance(template, int):
        return int(value)
    if isinstance(template, float):
        return float(value)
    if isinstance(template, tuple):
        if not value:
            return ()
        return tuple(float(x) for x in value.split(","))
    return value
