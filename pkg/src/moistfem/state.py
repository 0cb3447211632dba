"""Prognostic state bundle and reference profiles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spaces import CompatibleSpaces, Field

PROGNOSTIC = ("v", "rho", "theta", "rv", "rc", "rr")
MOISTURE = ("rv", "rc", "rr")


@dataclass
class State:
    spaces: CompatibleSpaces
    v: Field
    rho: Field
    theta: Field
    rv: Field
    rc: Field
    rr: Field
    time: float = 0.0
    surface_rain: np.ndarray | None = field(default=None)

    @classmethod
    def zeros(cls, spaces: CompatibleSpaces) -> "State":
        return cls(
            spaces,
            spaces.velocity.zero(),
            spaces.density.zero(),
            spaces.temperature.zero(),
            spaces.temperature.zero(),
            spaces.temperature.zero(),
            spaces.temperature.zero(),
            0.0,
            np.zeros(spaces.mesh.nx),
        )

    def copy(self) -> "State":
        rain = None if self.surface_rain is None else self.surface_rain.copy()
        return State(
            self.spaces,
            *(getattr(self, n).copy() for n in PROGNOSTIC),
            time=self.time,
            surface_rain=rain,
        )

    def fields(self) -> dict[str, Field]:
        return {n: getattr(self, n) for n in PROGNOSTIC}

    @property
    def total_water(self) -> np.ndarray:
        return self.rv.dat + self.rc.dat + self.rr.dat

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(getattr(self, n).dat)) for n in PROGNOSTIC)


@dataclass
class ReferenceProfiles:
    rho: Field
    theta: Field
