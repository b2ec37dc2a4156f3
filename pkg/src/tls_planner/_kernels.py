"""Numba kernel for the first-hit sweep over a full scanner grid.

The sweep is organized by azimuth column: all rays of one column share the
horizontal slab geometry, so the per-box X/Y slab interval is computed once
per column as an interval in s = t * cos(elevation) and rescaled per ray.
Boxes are pre-bucketed into the azimuth columns their footprint subtends and
pre-windowed in elevation, which keeps the inner loop close to the number of
rays that can actually hit something.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def first_hit_counts(
    ox, oy, oz,
    cos_v, sin_v, cos_h, sin_h,
    box_min, box_max, box_col0, grid_nx, grid_ny, grid_nz,
    vox0, vox1, vox2,
    col_offsets, col_boxes, kv_lo, kv_hi,
    min_range, max_range,
    counts,
):
    """Accumulate per-cell first-hit counts for one scan origin.

    counts is the (n_cells,) uint32 output row.  col_offsets/col_boxes give,
    for every azimuth column, the candidate box indices; kv_lo/kv_hi give the
    per-box elevation index window.  Entry distances below min_range or above
    max_range contribute nothing; an origin inside a box clamps to t = 0.
    """
    n_v = cos_v.shape[0]
    n_h = cos_h.shape[0]
    t_col = np.empty(n_v)
    b_col = np.empty(n_v, np.int32)
    for kh in range(n_h):
        start = col_offsets[kh]
        end = col_offsets[kh + 1]
        if start == end:
            continue
        t_col[:] = np.inf
        b_col[:] = -1
        ca = cos_h[kh]
        sa = sin_h[kh]
        for idx in range(start, end):
            b = col_boxes[idx]
            s_lo = -np.inf
            s_hi = np.inf
            if ca != 0.0:
                s0 = (box_min[b, 0] - ox) / ca
                s1 = (box_max[b, 0] - ox) / ca
                if s0 > s1:
                    s0, s1 = s1, s0
                if s0 > s_lo:
                    s_lo = s0
                if s1 < s_hi:
                    s_hi = s1
            elif ox < box_min[b, 0] or ox > box_max[b, 0]:
                continue
            if sa != 0.0:
                s0 = (box_min[b, 1] - oy) / sa
                s1 = (box_max[b, 1] - oy) / sa
                if s0 > s1:
                    s0, s1 = s1, s0
                if s0 > s_lo:
                    s_lo = s0
                if s1 < s_hi:
                    s_hi = s1
            elif oy < box_min[b, 1] or oy > box_max[b, 1]:
                continue
            if s_lo > s_hi or s_hi < 0.0:
                continue
            if s_lo < 0.0:
                s_lo = 0.0
            zm = box_min[b, 2] - oz
            zM = box_max[b, 2] - oz
            for kv in range(kv_lo[b], kv_hi[b] + 1):
                cv = cos_v[kv]
                sv = sin_v[kv]
                if cv > 1e-300:
                    t_lo = s_lo / cv
                    t_hi = s_hi / cv
                elif s_lo <= 0.0 <= s_hi:
                    t_lo = 0.0
                    t_hi = np.inf
                else:
                    continue
                if sv != 0.0:
                    t0 = zm / sv
                    t1 = zM / sv
                    if t0 > t1:
                        t0, t1 = t1, t0
                    if t0 > t_lo:
                        t_lo = t0
                    if t1 < t_hi:
                        t_hi = t1
                elif oz < box_min[b, 2] or oz > box_max[b, 2]:
                    continue
                if t_lo > t_hi or t_hi < 0.0:
                    continue
                t_entry = t_lo if t_lo > 0.0 else 0.0
                if t_entry < t_col[kv]:
                    t_col[kv] = t_entry
                    b_col[kv] = b
        for kv in range(n_v):
            b = b_col[kv]
            if b < 0:
                continue
            t = t_col[kv]
            if t < min_range or t > max_range:
                continue
            cv = cos_v[kv]
            px = ox + t * cv * ca
            py = oy + t * cv * sa
            pz = oz + t * sin_v[kv]
            i = int((px - box_min[b, 0]) / vox0)
            j = int((py - box_min[b, 1]) / vox1)
            k = int((pz - box_min[b, 2]) / vox2)
            if i < 0:
                i = 0
            elif i >= grid_nx[b]:
                i = grid_nx[b] - 1
            if j < 0:
                j = 0
            elif j >= grid_ny[b]:
                j = grid_ny[b] - 1
            if k < 0:
                k = 0
            elif k >= grid_nz[b]:
                k = grid_nz[b] - 1
            counts[box_col0[b] + (i * grid_ny[b] + j) * grid_nz[b] + k] += 1
