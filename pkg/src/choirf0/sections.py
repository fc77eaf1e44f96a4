from __future__ import annotations

from enum import Enum


class Section(str, Enum):
    """SATB choir section."""

    SOPRANO = "soprano"
    ALTO = "alto"
    TENOR = "tenor"
    BASS = "bass"

    @property
    def letter(self) -> str:
        return self.value[0].upper()

    @classmethod
    def parse(cls, name: str | Section) -> Section:
        """Accept ``"soprano"``, ``"Soprano"``, ``"S"`` and friends."""
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        for section in cls:
            if key in (section.value, section.value[0]):
                return section
        raise ValueError(f"unknown choir section: {name!r}")


SATB = (Section.SOPRANO, Section.ALTO, Section.TENOR, Section.BASS)
