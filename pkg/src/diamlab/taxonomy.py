"""Three-axis classification scheme for findings.

Every finding lands in exactly one cell of origin x technique x impact.
The spoofing technique and the internal/compromised-element origins are
part of the scheme for completeness; no attack module currently
produces them.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Origin(Enum):
    EXTERNAL_INTERCONNECT = "external_interconnect"
    INTERNAL = "internal"
    COMPROMISED_ELEMENT = "compromised_element"


class Technique(Enum):
    INTERCEPTION = "interception"
    FLOODING = "flooding"
    MALFORMED_MESSAGE = "malformed_message"
    SPOOFING = "spoofing"


class Impact(Enum):
    CONFIDENTIALITY = "confidentiality"
    INTEGRITY = "integrity"
    AVAILABILITY = "availability"


@dataclass(frozen=True)
class TaxonomyLabel:
    origin: Origin
    technique: Technique
    impact: Impact

    @property
    def cell(self) -> str:
        return f"{self.origin.value}/{self.technique.value}/{self.impact.value}"

    def to_dict(self) -> dict[str, str]:
        return {
            "origin": self.origin.value,
            "technique": self.technique.value,
            "impact": self.impact.value,
        }

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "TaxonomyLabel":
        return cls(
            origin=Origin(d["origin"]),
            technique=Technique(d["technique"]),
            impact=Impact(d["impact"]),
        )
