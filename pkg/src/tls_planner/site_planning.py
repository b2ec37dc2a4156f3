"""Greedy selection of a minimal covering set of scan locations.

A cell counts as covered when at least one selected location sees it (hit
count > 0); raw counts only rank candidates.  Cells visible from no location
at all are reported as uncoverable instead of looping forever.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .field_model import CellId
from .raycast import VisibilityTable


@dataclass
class CoverSolution:
    """Ordered greedy picks with the number of newly covered cells per pick."""

    selected: list[int]                  # location ids, selection order
    covered_per_step: list[int]
    uncoverable: set[CellId] = field(default_factory=set)
    n_cells: int = 0
    n_candidates: int = 0

    @property
    def reduction(self) -> float:
        """Fraction of candidate locations eliminated."""
        if self.n_candidates == 0:
            return 0.0
        return 1.0 - len(self.selected) / self.n_candidates


def greedy_cover(table: VisibilityTable) -> CoverSolution:
    """Pick locations by maximum not-yet-covered cell count until no location
    adds coverage.  Ties go to the lowest location id, so the result is
    deterministic."""
    if table.n_locations == 0 or table.n_cells == 0:
        raise ValueError("visibility table is empty")
    visible = table.visibility
    uncovered = np.ones(table.n_cells, dtype=bool)
    selected: list[int] = []
    covered_per_step: list[int] = []
    chosen = np.zeros(table.n_locations, dtype=bool)
    # Rows are ordered by ascending location id, so argmax's first-max rule
    # is exactly the lowest-id tie-break.
    while uncovered.any():
        gains = visible[:, uncovered].sum(axis=1)
        gains[chosen] = 0
        best = int(np.argmax(gains))
        if gains[best] == 0:
            break
        selected.append(table.locations[best].location_id)
        covered_per_step.append(int(gains[best]))
        chosen[best] = True
        uncovered &= ~visible[best]
    cells = table.cells()
    uncoverable = {cells[col] for col in np.nonzero(uncovered)[0]}
    return CoverSolution(
        selected=selected,
        covered_per_step=covered_per_step,
        uncoverable=uncoverable,
        n_cells=table.n_cells,
        n_candidates=table.n_locations,
    )


def force_cover_size(table: VisibilityTable, solution: CoverSolution, size: int) -> list[int]:
    """Location set of exactly ``size`` ids for like-for-like comparisons.

    Truncates the greedy order when it is longer; extends with the unselected
    locations of highest raw visibility (ties to lowest id) when shorter.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    if len(solution.selected) >= size:
        return solution.selected[:size]
    picked = list(solution.selected)
    have = set(picked)
    totals = table.visibility.sum(axis=1)
    order = sorted(
        (
            (loc.location_id, int(totals[row]))
            for row, loc in enumerate(table.locations)
            if loc.location_id not in have
        ),
        key=lambda item: (-item[1], item[0]),
    )
    picked.extend(lid for lid, _ in order[: size - len(picked)])
    return picked


def write_cover_csv(path, solution: CoverSolution) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "location_id", "newly_covered"])
        for step, (lid, gain) in enumerate(zip(solution.selected, solution.covered_per_step)):
            writer.writerow([step, lid, gain])


def read_cover_csv(path) -> list[int]:
    """Selected location ids in greedy order."""
    selected = []
    with open(path, newline="") as handle:
        lines = (line for line in handle if not line.startswith("#"))
        for row in csv.DictReader(lines):
            selected.append(int(row["location_id"]))
    return selected
