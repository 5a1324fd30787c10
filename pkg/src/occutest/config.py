"""Study configuration shared by the asymptotic and simulation studies."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .inference import ThetaFull
from .model import RegionDesign

# p1 = p2 = 0.5, K = 3 visits and N = 50 sites in both regions
STANDARD_P = 0.5
STANDARD_K = 3
STANDARD_N = 50
STANDARD_PSI1 = 0.8


def r_grid(r_min: float = 0.0, r_max: float = 0.9, r_step: float = 0.025) -> tuple[float, ...]:
    """Inclusive grid ``r_min, r_min + r_step, ..., r_max`` rounded to 10 decimals."""
    if r_step <= 0:
        raise ValueError("r_step must be positive")
    n = int(np.floor((r_max - r_min) / r_step + 1e-9)) + 1
    return tuple(round(r_min + i * r_step, 10) for i in range(n))


@dataclass(frozen=True)
class SweepConfig:
    """Simulation/asymptotics study over effect sizes ``R`` with ``psi2 = (1 - R) psi1``."""

    psi1: float = STANDARD_PSI1
    p1: float = STANDARD_P
    p2: float = STANDARD_P
    design_1: RegionDesign = field(default_factory=lambda: RegionDesign(STANDARD_N, STANDARD_K))
    design_2: RegionDesign = field(default_factory=lambda: RegionDesign(STANDARD_N, STANDARD_K))
    R_grid: tuple[float, ...] = field(default_factory=r_grid)
    replicates: int = 10_000
    alpha: float = 0.05
    base_seed: int = 20240101

    def __post_init__(self):
        for name in ("psi1", "p1", "p2", "alpha"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value!r}")
        object.__setattr__(self, "R_grid", tuple(float(r) for r in self.R_grid))
        if any(not 0.0 <= r < 1.0 for r in self.R_grid):
            raise ValueError("R values must lie in [0, 1)")
        if list(self.R_grid) != sorted(self.R_grid):
            raise ValueError("R_grid must be sorted")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if not 0 <= self.base_seed < 2**64:
            raise ValueError("base_seed must be a 64-bit unsigned integer")

    @property
    def designs(self) -> tuple[RegionDesign, RegionDesign]:
        return (self.design_1, self.design_2)

    def truth(self, R: float) -> ThetaFull:
        return ThetaFull.from_effect_size(self.psi1, self.p1, self.p2, R)

    def with_(self, **changes) -> "SweepConfig":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return SweepConfig(**values)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["R_grid"] = list(self.R_grid)
        return out


def r_key(R: float) -> int:
    """Integer stream key of an effect size (``R`` in units of 1e-4).

    Streams are keyed by the value of ``R`` rather than its grid position,
    so a point gives the same replicates in any grid that contains it.
    """
    return int(round(R * 10_000))


def config_from_dict(values: dict) -> SweepConfig:
    """Inverse of :meth:`SweepConfig.to_dict`."""
    values = dict(values)
    for name in ("design_1", "design_2"):
        d = values.get(name)
        if isinstance(d, dict):
            values[name] = RegionDesign(int(d["n_sites"]), int(d["n_visits"]))
    if "R_grid" in values:
        values["R_grid"] = tuple(float(r) for r in values["R_grid"])
    return SweepConfig(**values)
