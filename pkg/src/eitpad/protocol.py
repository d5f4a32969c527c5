"""Adjacent-drive adjacent-measurement excitation schedule.

Drive pairs (k, k+1 mod E) are enumerated in ascending k; for each drive
pair, measurement pairs (m, m+1 mod E) in ascending m over electrodes
disjoint from the drive pair. Full enumeration yields E*(E-3) patterns;
reciprocity reduction keeps one pattern per reciprocal twin pair, halving
the count (104 for 16 electrodes).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple


class Pattern(NamedTuple):
    drive_pos: int
    drive_neg: int
    meas_pos: int
    meas_neg: int


@dataclass(frozen=True)
class Protocol:
    patterns: tuple[Pattern, ...]
    electrode_count: int
    reciprocity_reduced: bool

    def __len__(self) -> int:
        return len(self.patterns)

    @cached_property
    def protocol_id(self) -> str:
        h = hashlib.sha256(protocol_to_json(self).encode())
        return h.hexdigest()[:12]

    def drive_pairs(self) -> list[tuple[int, int]]:
        """Distinct drive pairs in first-appearance order."""
        seen: dict[tuple[int, int], None] = {}
        for p in self.patterns:
            seen.setdefault((p.drive_pos, p.drive_neg))
        return list(seen)


def generate_adjacent_protocol(
    electrode_count: int, reciprocity_reduced: bool = True
) -> Protocol:
    """Enumerate the adjacent-adjacent schedule for E electrodes.

    With reciprocity_reduced, a pattern is kept only when its
    (drive pair, measurement pair) tuple orders lexicographically before
    its reciprocal twin, which keeps exactly one of each twin pair.
    """
    e = electrode_count
    if e < 4:
        raise ValueError(f"electrode_count must be >= 4, got {e}")
    patterns = []
    for k in range(e):
        drive = (k, (k + 1) % e)
        for m in range(e):
            meas = (m, (m + 1) % e)
            if set(meas) & set(drive):
                continue
            if reciprocity_reduced and (meas + drive) < (drive + meas):
                continue
            patterns.append(Pattern(*drive, *meas))
    return Protocol(tuple(patterns), e, reciprocity_reduced)


def reciprocal(pattern: Pattern) -> Pattern:
    """Twin pattern with drive and measurement roles swapped."""
    return Pattern(
        pattern.meas_pos, pattern.meas_neg, pattern.drive_pos, pattern.drive_neg
    )


def protocol_to_json(protocol: Protocol) -> str:
    doc = {
        "electrode_count": protocol.electrode_count,
        "patterns": [list(p) for p in protocol.patterns],
        "reciprocity_reduced": protocol.reciprocity_reduced,
    }
    return json.dumps(doc, sort_keys=True)


def protocol_from_json(text: str) -> Protocol:
    doc = json.loads(text)
    return Protocol(
        patterns=tuple(Pattern(*map(int, p)) for p in doc["patterns"]),
        electrode_count=int(doc["electrode_count"]),
        reciprocity_reduced=bool(doc["reciprocity_reduced"]),
    )
