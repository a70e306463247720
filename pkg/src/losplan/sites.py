"""Tower and school records."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .geodesy import GeoPoint

DEFAULT_SCHOOL_HEIGHT_M = 10.0


class SiteKind(enum.Enum):
    TOWER = "tower"
    PRIMARY_SCHOOL = "primary"
    SECONDARY_SCHOOL = "secondary"

    @property
    def is_school(self) -> bool:
        return self is not SiteKind.TOWER


@dataclass(frozen=True)
class Site:
    id: str
    location: GeoPoint
    antenna_height: float
    kind: SiteKind

    def __post_init__(self):
        if not self.antenna_height > 0:
            raise ValueError(f"site {self.id}: antenna height must be positive")

    @classmethod
    def tower(cls, id: str, lat: float, lon: float, height: float) -> "Site":
        return cls(str(id), GeoPoint(lat, lon), float(height), SiteKind.TOWER)

    @classmethod
    def school(
        cls,
        id: str,
        lat: float,
        lon: float,
        level: str = "primary",
        height: float = DEFAULT_SCHOOL_HEIGHT_M,
    ) -> "Site":
        return cls(str(id), GeoPoint(lat, lon), float(height), SiteKind(level))
