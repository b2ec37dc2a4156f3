import math

import numpy as np
import pytest

from tls_planner.field_model import PlotBox, ScanLocation
from tls_planner.raycast import VisibilityTable
from tls_planner.site_planning import CoverSolution, force_cover_size, greedy_cover, read_cover_csv, write_cover_csv

from oracles import optimal_cover_size


def table_from_matrix(matrix):
    matrix = np.asarray(matrix, dtype=np.uint32)
    n_loc, n_cells = matrix.shape
    box = PlotBox(
        plot_id=(0, 0),
        aabb_min=np.zeros(3),
        aabb_max=np.array([n_cells * 0.5, 0.5, 0.33]),
        grid_dims=(n_cells, 1, 1),
    )
    locations = [
        ScanLocation(location_id=i, position=(float(i), 0.0), kind="alley_row_intersection")
        for i in range(n_loc)
    ]
    return VisibilityTable(counts=matrix, locations=locations, boxes=[box])


def test_single_location_covering_everything():
    table = table_from_matrix([[1, 2, 1, 5]])
    solution = greedy_cover(table)
    assert solution.selected == [0]
    assert solution.covered_per_step == [4]
    assert not solution.uncoverable


def test_hand_traced_greedy_example():
    # L0 covers {0,1,2}, L1 covers {2,3}, L2 covers {3,4}
    table = table_from_matrix(
        [
            [1, 1, 1, 0, 0],
            [0, 0, 1, 1, 0],
            [0, 0, 0, 1, 1],
        ]
    )
    solution = greedy_cover(table)
    assert solution.selected == [0, 2]
    assert solution.covered_per_step == [3, 2]
    assert not solution.uncoverable


def test_uncoverable_cells_reported_not_looped():
    table = table_from_matrix(
        [
            [1, 0, 0],
            [1, 1, 0],
        ]
    )
    solution = greedy_cover(table)
    assert solution.selected == [1]
    assert len(solution.uncoverable) == 1
    (cell,) = solution.uncoverable
    assert cell.cell_index == (2, 0, 0)


def test_tie_breaks_to_lowest_location_id():
    table = table_from_matrix(
        [
            [1, 1, 0, 0],
            [0, 0, 1, 1],
            [1, 1, 0, 0],
        ]
    )
    solution = greedy_cover(table)
    assert solution.selected[0] == 0


def test_full_coverage_recheck():
    rng = np.random.default_rng(5)
    matrix = (rng.random((9, 40)) < 0.3).astype(np.uint32)
    table = table_from_matrix(matrix)
    solution = greedy_cover(table)
    visible = matrix > 0
    covered = np.zeros(40, dtype=bool)
    for lid in solution.selected:
        covered |= visible[lid]
    uncovered_cols = {cell.cell_index[0] for cell in solution.uncoverable}
    for col in range(40):
        if col in uncovered_cols:
            assert not visible[:, col].any()
        else:
            assert covered[col]
    assert all(gain > 0 for gain in solution.covered_per_step)


def test_greedy_within_harmonic_bound_of_optimal():
    rng = np.random.default_rng(17)
    for _ in range(20):
        n_loc = rng.integers(4, 12)
        n_cells = rng.integers(5, 20)
        matrix = (rng.random((n_loc, n_cells)) < 0.35).astype(np.uint32)
        table = table_from_matrix(matrix)
        solution = greedy_cover(table)
        opt = optimal_cover_size(matrix > 0)
        coverable = (matrix > 0).any(axis=0).sum()
        bound = sum(1.0 / k for k in range(1, max(coverable, 1) + 1))
        if opt == 0:
            assert solution.selected == []
        else:
            assert len(solution.selected) <= math.ceil(bound * opt) + 1e-9


def test_force_cover_size_truncates_and_extends():
    table = table_from_matrix(
        [
            [1, 1, 1, 0, 0],
            [0, 0, 1, 1, 0],
            [0, 0, 0, 1, 1],
            [1, 0, 0, 0, 0],
        ]
    )
    solution = greedy_cover(table)
    assert force_cover_size(table, solution, 1) == solution.selected[:1]
    extended = force_cover_size(table, solution, 4)
    assert len(extended) == 4
    assert extended[: len(solution.selected)] == solution.selected
    assert set(extended) == {0, 1, 2, 3}


def test_empty_table_rejected():
    with pytest.raises(ValueError):
        greedy_cover(table_from_matrix(np.zeros((0, 0))))


def test_cover_csv_round_trip(tmp_path):
    table = table_from_matrix([[1, 1, 0], [0, 0, 1]])
    solution = greedy_cover(table)
    path = tmp_path / "cover.csv"
    write_cover_csv(path, solution)
    assert read_cover_csv(path) == solution.selected
