"""Experiment configuration: validation, JSON round-trip, presets.

A configuration pins the full experiment matrix — graph sizes, noise scales,
instance/gauge/read counts, the penalty-strength grid, the sampling backend —
plus the root seed and output directory.  Identical configurations produce
identical artifacts (analysis tables are byte-stable across reruns).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

from .errors import InputError, ParseError, RangeError
from .qac import PENALTY_GRID

BACKENDS = ("sa", "pticm")
DEFAULT_ETAS = (0.0, 0.03, 0.05, 0.07, 0.10, 0.15)

# per-backend option whitelists (validated against the solver signatures)
_BACKEND_OPTIONS = {
    "sa": ("sweeps", "beta_min", "beta_max"),
    "pticm": ("n_temps", "sweeps", "icm_period", "beta_min", "beta_max"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    sizes: tuple[int, ...]
    etas: tuple[float, ...] = DEFAULT_ETAS
    n_instances: int = 20
    n_gauges: int = 5
    n_reads: int = 200
    gammas: tuple[float, ...] = PENALTY_GRID
    backend: str = "sa"
    backend_options: dict = field(default_factory=dict)
    seed: int = 0
    out_dir: str = "qaclab-out"
    redraw_noise_per_gauge: bool = False  # fixed per (instance, eta) by default

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "etas", tuple(float(e) for e in self.etas))
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        if not self.sizes:
            raise InputError("sizes must be non-empty")
        if any(s < 1 for s in self.sizes):
            raise RangeError("every size must be >= 1")
        if len(set(self.sizes)) != len(self.sizes):
            raise InputError("duplicate sizes")
        if not self.etas:
            raise InputError("etas must be non-empty")
        if any(e < 0 for e in self.etas):
            raise RangeError("noise scales must be >= 0")
        if len(set(self.etas)) != len(self.etas):
            raise InputError("duplicate noise scales")
        if not self.gammas:
            raise InputError("penalty grid must be non-empty")
        if any(not 0.0 < g <= 1.0 for g in self.gammas):
            raise RangeError("penalty strengths must be in (0, 1]")
        for name, value in (("n_instances", self.n_instances),
                            ("n_gauges", self.n_gauges),
                            ("n_reads", self.n_reads)):
            if int(value) != value or value < 1:
                raise InputError(f"{name} must be a positive integer, got {value}")
        if self.backend not in BACKENDS:
            raise InputError(
                f"unknown backend {self.backend!r}; expected one of {BACKENDS}"
            )
        allowed = _BACKEND_OPTIONS[self.backend]
        for key in self.backend_options:
            if key not in allowed:
                raise InputError(
                    f"backend option {key!r} not recognized for {self.backend!r}"
                )
        if not isinstance(self.out_dir, str) or not self.out_dir:
            raise InputError("out_dir must be a non-empty string")

    @classmethod
    def full_scale(cls, sizes, **overrides) -> "ExperimentConfig":
        """Campaign-sized counts: 100 instances, 5 gauges, 10^4 readouts
        per gauge."""
        defaults = dict(n_instances=100, n_gauges=5, n_reads=10_000)
        defaults.update(overrides)
        return cls(sizes=tuple(sizes), **defaults)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        d["etas"] = list(self.etas)
        d["gammas"] = list(self.gammas)
        return d


def write_config(config: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(config.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: expected a JSON object")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise InputError(f"{path}: unknown config keys {sorted(unknown)}")
    if "sizes" not in raw:
        raise InputError(f"{path}: missing required key 'sizes'")
    return ExperimentConfig(**raw)
