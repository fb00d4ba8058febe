"""Domain presets and the published invariants they are checked against."""
from __future__ import annotations

from dataclasses import dataclass

from .solver import SolverConfig
from .spectral import Grid


@dataclass(frozen=True)
class DomainPreset:
    name: str
    config: SolverConfig
    d_manifold: int | None
    lyap1: float | None

    @property
    def lyapunov_time(self) -> float:
        return 1.0 / self.lyap1

    @property
    def horizon_steps(self) -> int:
        """Assimilation window K with K*dt closest to one Lyapunov time."""
        return int(round(self.lyapunov_time / self.config.dt))


PRESETS = {
    "L22": DomainPreset("L22", SolverConfig(Grid(22.0, 64), 0.1, 15), d_manifold=8, lyap1=0.05),
    "L44": DomainPreset("L44", SolverConfig(Grid(44.0, 64), 0.1, 20), d_manifold=18, lyap1=0.083),
    "L66": DomainPreset("L66", SolverConfig(Grid(66.0, 72), 0.05, 25), d_manifold=28, lyap1=0.087),
}


def get_preset(name: str) -> DomainPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def custom_preset(L: float, n: int, dt: float, p: int, d_manifold=None, lyap1=None) -> DomainPreset:
    return DomainPreset("custom", SolverConfig(Grid(float(L), int(n)), float(dt), int(p)), d_manifold, lyap1)
