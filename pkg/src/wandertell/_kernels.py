"""Numba kernels for the per-step hot paths.

Everything here operates on plain numpy arrays so the jitted code stays
cacheable across processes. Callers own all unit conversions and bounds
checks that raise exceptions; kernels only do arithmetic.
"""

import numpy as np
from numba import njit

_INF = 1e30


@njit(cache=True)
def ray_depths(occupancy, object_ids, x0, y0, bearings, max_range, resolution):
    """Cast one ray per bearing and return (depth, hit_object, hit_flag).

    Depth is the distance to the entry boundary of the first obstacle cell
    (Amanatides-Woo traversal), clamped to max_range. Leaving the grid counts
    as hitting a wall that belongs to no object. hit_flag is 0 for clamped
    rays, which by construction have depth == max_range.
    """
    n = bearings.shape[0]
    height, width = occupancy.shape
    depth = np.empty(n, np.float64)
    hit_obj = np.full(n, -1, np.int32)
    hit = np.zeros(n, np.uint8)
    for k in range(n):
        dx = np.cos(bearings[k])
        dy = np.sin(bearings[k])
        col = int(np.floor(x0 / resolution))
        row = int(np.floor(y0 / resolution))
        if dx > 0.0:
            step_c = 1
            t_max_x = ((col + 1) * resolution - x0) / dx
            t_dx = resolution / dx
        elif dx < 0.0:
            step_c = -1
            t_max_x = (col * resolution - x0) / dx
            t_dx = -resolution / dx
        else:
            step_c = 0
            t_max_x = _INF
            t_dx = _INF
        if dy > 0.0:
            step_r = 1
            t_max_y = ((row + 1) * resolution - y0) / dy
            t_dy = resolution / dy
        elif dy < 0.0:
            step_r = -1
            t_max_y = (row * resolution - y0) / dy
            t_dy = -resolution / dy
        else:
            step_r = 0
            t_max_y = _INF
            t_dy = _INF

        t = 0.0
        d = max_range
        while t < max_range:
            if row < 0 or row >= height or col < 0 or col >= width:
                d = t
                hit[k] = 1
                break
            if occupancy[row, col] != 0:
                d = t
                hit_obj[k] = object_ids[row, col]
                hit[k] = 1
                break
            if t_max_x < t_max_y:
                t = t_max_x
                t_max_x += t_dx
                col += step_c
            elif t_max_y < t_max_x:
                t = t_max_y
                t_max_y += t_dy
                row += step_r
            else:
                # exact corner crossing: step diagonally
                t = t_max_x
                t_max_x += t_dx
                t_max_y += t_dy
                col += step_c
                row += step_r
        if d > max_range:
            d = max_range
        if d >= max_range:
            d = max_range
            hit[k] = 0
            hit_obj[k] = -1
        depth[k] = d
    return depth, hit_obj, hit


@njit(cache=True)
def local_from_depth(depth, hit, rel_bearings, side, resolution, max_range):
    """Rasterize per-ray depths into an egocentric side x side x 2 grid.

    The agent sits at the center of the bottom-edge cell facing up (towards
    row 0). Channel 0 is occupancy, channel 1 is explored. Cells a ray passes
    through before its endpoint become explored-free; the endpoint cell of a
    hit ray becomes explored-occupied.
    """
    grid = np.zeros((side, side, 2), np.float32)
    center = side // 2
    n = depth.shape[0]
    for k in range(n):
        d = depth[k]
        if d <= 0.0:
            continue
        # (u, v) index-space coords: u forward, v left, boundaries at integers
        du = np.cos(rel_bearings[k]) / resolution
        dv = np.sin(rel_bearings[k]) / resolution
        ku = 0
        kv = 0
        if du > 0.0:
            step_u = 1
            t_max_u = 0.5 / du
            t_du = 1.0 / du
        elif du < 0.0:
            step_u = -1
            t_max_u = -0.5 / du
            t_du = -1.0 / du
        else:
            step_u = 0
            t_max_u = _INF
            t_du = _INF
        if dv > 0.0:
            step_v = 1
            t_max_v = 0.5 / dv
            t_dv = 1.0 / dv
        elif dv < 0.0:
            step_v = -1
            t_max_v = -0.5 / dv
            t_dv = -1.0 / dv
        else:
            step_v = 0
            t_max_v = _INF
            t_dv = _INF

        while True:
            i = side - 1 - ku
            j = center - kv
            if i < 0 or i >= side or j < 0 or j >= side:
                break
            t_exit = t_max_u if t_max_u < t_max_v else t_max_v
            if hit[k] != 0 and d < t_exit:
                grid[i, j, 0] = 1.0
                grid[i, j, 1] = 1.0
                break
            grid[i, j, 1] = 1.0
            if hit[k] == 0 and t_exit >= d:
                break
            if t_max_u < t_max_v:
                t_max_u += t_du
                ku += step_u
            elif t_max_v < t_max_u:
                t_max_v += t_dv
                kv += step_v
            else:
                t_max_u += t_du
                t_max_v += t_dv
                ku += step_u
                kv += step_v
    return grid


@njit(cache=True)
def register_local(global_grid, local_grid, ex, ey, eth, resolution, beta,
                   r0, r1, c0, c1):
    """Blend a local map into the global grid over the given cell box.

    Occupancy uses the moving average (1-beta)*old + beta*new on cells whose
    bilinearly sampled explored value is positive; explored uses max, so it
    never decreases.
    """
    m = global_grid.shape[0]
    side = local_grid.shape[0]
    center = side // 2
    cg = m // 2
    cos_t = np.cos(eth)
    sin_t = np.sin(eth)
    for gi in range(r0, r1 + 1):
        y = (gi - cg) * resolution - ey
        for gj in range(c0, c1 + 1):
            x = (gj - cg) * resolution - ex
            a = cos_t * x + sin_t * y            # forward, meters
            b = -sin_t * x + cos_t * y           # left, meters
            fi = (side - 1) - a / resolution
            fj = center - b / resolution
            if fi < -1.0 or fi > side or fj < -1.0 or fj > side:
                continue
            i0 = int(np.floor(fi))
            j0 = int(np.floor(fj))
            wi = fi - i0
            wj = fj - j0
            expl = 0.0
            occ = 0.0
            for di in range(2):
                ii = i0 + di
                if ii < 0 or ii >= side:
                    continue
                wy = (1.0 - wi) if di == 0 else wi
                for dj in range(2):
                    jj = j0 + dj
                    if jj < 0 or jj >= side:
                        continue
                    w = wy * ((1.0 - wj) if dj == 0 else wj)
                    occ += w * local_grid[ii, jj, 0]
                    expl += w * local_grid[ii, jj, 1]
            if expl <= 0.0:
                continue
            global_grid[gi, gj, 0] = (1.0 - beta) * global_grid[gi, gj, 0] + beta * occ
            if expl > global_grid[gi, gj, 1]:
                global_grid[gi, gj, 1] = expl


@njit(cache=True)
def scan_scores(prev_grid, pts_i, pts_j, expl_cur, occ_cur, xs, ys, ths,
                resolution):
    """Overlap score of the current scan against the previous local map.

    The candidate grid is the cartesian product of the xs, ys, ths axes;
    candidate (ix, iy, it) transforms current-frame points by
    (xs[ix], ys[iy], ths[it]) into the previous agent frame and sums
    min(explored_prev, explored_cur) * (1 - |occ_prev - occ_cur|).
    Scores come back flattened with the rotation axis fastest, matching a
    row-major ravel of the (xs, ys, ths) product. Rotating the points once
    per ths entry keeps the inner translation loops to adds and lookups.
    """
    side = prev_grid.shape[0]
    center = side // 2
    n_pts = pts_i.shape[0]
    n_x = xs.shape[0]
    n_y = ys.shape[0]
    n_th = ths.shape[0]
    scores = np.zeros(n_x * n_y * n_th, np.float64)

    a_arr = np.empty(n_pts, np.float64)
    b_arr = np.empty(n_pts, np.float64)
    for p in range(n_pts):
        a_arr[p] = (side - 1 - pts_i[p]) * resolution
        b_arr[p] = (center - pts_j[p]) * resolution

    rot_a = np.empty(n_pts, np.float64)
    rot_b = np.empty(n_pts, np.float64)
    for it in range(n_th):
        cos_t = np.cos(ths[it])
        sin_t = np.sin(ths[it])
        for p in range(n_pts):
            rot_a[p] = cos_t * a_arr[p] - sin_t * b_arr[p]
            rot_b[p] = sin_t * a_arr[p] + cos_t * b_arr[p]
        for ix in range(n_x):
            dx = xs[ix]
            for iy in range(n_y):
                dy = ys[iy]
                total = 0.0
                for p in range(n_pts):
                    fi = (side - 1) - (rot_a[p] + dx) / resolution
                    fj = center - (rot_b[p] + dy) / resolution
                    i0 = int(np.floor(fi))
                    j0 = int(np.floor(fj))
                    wi = fi - i0
                    wj = fj - j0
                    expl = 0.0
                    occ = 0.0
                    if 0 <= i0 and i0 + 1 < side and 0 <= j0 and j0 + 1 < side:
                        w00 = (1.0 - wi) * (1.0 - wj)
                        w01 = (1.0 - wi) * wj
                        w10 = wi * (1.0 - wj)
                        w11 = wi * wj
                        occ = (w00 * prev_grid[i0, j0, 0]
                               + w01 * prev_grid[i0, j0 + 1, 0]
                               + w10 * prev_grid[i0 + 1, j0, 0]
                               + w11 * prev_grid[i0 + 1, j0 + 1, 0])
                        expl = (w00 * prev_grid[i0, j0, 1]
                                + w01 * prev_grid[i0, j0 + 1, 1]
                                + w10 * prev_grid[i0 + 1, j0, 1]
                                + w11 * prev_grid[i0 + 1, j0 + 1, 1])
                    elif fi < -1.0 or fi > side or fj < -1.0 or fj > side:
                        continue
                    else:
                        for di in range(2):
                            ii = i0 + di
                            if ii < 0 or ii >= side:
                                continue
                            wy = (1.0 - wi) if di == 0 else wi
                            for dj in range(2):
                                jj = j0 + dj
                                if jj < 0 or jj >= side:
                                    continue
                                w = wy * ((1.0 - wj) if dj == 0 else wj)
                                occ += w * prev_grid[ii, jj, 0]
                                expl += w * prev_grid[ii, jj, 1]
                    e = expl if expl < expl_cur[p] else expl_cur[p]
                    if e <= 0.0:
                        continue
                    diff = occ - occ_cur[p]
                    if diff < 0.0:
                        diff = -diff
                    total += e * (1.0 - diff)
                scores[(ix * n_y + iy) * n_th + it] = total
    return scores


@njit(cache=True)
def bfs_distances(blocked, start_r, start_c):
    """4-connected BFS cell distances from the start; -1 means unreachable.

    The start cell is treated as traversable regardless of its mask value
    (the agent occupies it, whatever the map claims).
    """
    h, w = blocked.shape
    dist = np.full((h, w), -1, np.int32)
    queue = np.empty(h * w, np.int32)
    head = 0
    tail = 0
    dist[start_r, start_c] = 0
    queue[tail] = start_r * w + start_c
    tail += 1
    while head < tail:
        idx = queue[head]
        head += 1
        r = idx // w
        c = idx % w
        d = dist[r, c] + 1
        if r > 0 and blocked[r - 1, c] == 0 and dist[r - 1, c] < 0:
            dist[r - 1, c] = d
            queue[tail] = idx - w
            tail += 1
        if c > 0 and blocked[r, c - 1] == 0 and dist[r, c - 1] < 0:
            dist[r, c - 1] = d
            queue[tail] = idx - 1
            tail += 1
        if c + 1 < w and blocked[r, c + 1] == 0 and dist[r, c + 1] < 0:
            dist[r, c + 1] = d
            queue[tail] = idx + 1
            tail += 1
        if r + 1 < h and blocked[r + 1, c] == 0 and dist[r + 1, c] < 0:
            dist[r + 1, c] = d
            queue[tail] = idx + w
            tail += 1
    return dist


@njit(cache=True)
def bfs_distances_to(blocked, start_r, start_c, t_rows, t_cols):
    """4-connected BFS distances, stopping once every target cell is settled.

    Target distances equal the full-flood values because BFS assigns
    distances in nondecreasing order; cells beyond the last-settled target
    stay -1. The start cell is treated as traversable regardless of its
    mask value.
    """
    h, w = blocked.shape
    dist = np.full((h, w), -1, np.int32)
    pending = np.zeros((h, w), np.uint8)
    remaining = 0
    for k in range(t_rows.shape[0]):
        if pending[t_rows[k], t_cols[k]] == 0:
            pending[t_rows[k], t_cols[k]] = 1
            remaining += 1
    queue = np.empty(h * w, np.int32)
    head = 0
    tail = 0
    dist[start_r, start_c] = 0
    queue[tail] = start_r * w + start_c
    tail += 1
    if pending[start_r, start_c] != 0:
        pending[start_r, start_c] = 0
        remaining -= 1
    while head < tail and remaining > 0:
        idx = queue[head]
        head += 1
        r = idx // w
        c = idx % w
        d = dist[r, c] + 1
        for s in range(4):
            if s == 0:
                rr, cc = r - 1, c
            elif s == 1:
                rr, cc = r, c - 1
            elif s == 2:
                rr, cc = r, c + 1
            else:
                rr, cc = r + 1, c
            if rr < 0 or rr >= h or cc < 0 or cc >= w:
                continue
            if blocked[rr, cc] != 0 or dist[rr, cc] >= 0:
                continue
            dist[rr, cc] = d
            queue[tail] = rr * w + cc
            tail += 1
            if pending[rr, cc] != 0:
                pending[rr, cc] = 0
                remaining -= 1
    return dist


@njit(cache=True)
def bfs_steps_to(blocked, start_r, start_c, goal_r, goal_c, max_pop):
    """BFS step count start -> goal with an expansion cap; -1 if not found.

    The start cell is treated as traversable regardless of its mask value.
    """
    if start_r == goal_r and start_c == goal_c:
        return 0
    h, w = blocked.shape
    dist = np.full((h, w), -1, np.int32)
    queue = np.empty(h * w, np.int32)
    head = 0
    tail = 0
    dist[start_r, start_c] = 0
    queue[tail] = start_r * w + start_c
    tail += 1
    popped = 0
    while head < tail and popped < max_pop:
        idx = queue[head]
        head += 1
        popped += 1
        r = idx // w
        c = idx % w
        d = dist[r, c] + 1
        for s in range(4):
            if s == 0:
                rr, cc = r - 1, c
            elif s == 1:
                rr, cc = r, c - 1
            elif s == 2:
                rr, cc = r, c + 1
            else:
                rr, cc = r + 1, c
            if rr < 0 or rr >= h or cc < 0 or cc >= w:
                continue
            if blocked[rr, cc] != 0 or dist[rr, cc] >= 0:
                continue
            if rr == goal_r and cc == goal_c:
                return d
            dist[rr, cc] = d
            queue[tail] = rr * w + cc
            tail += 1
    return -1


@njit(cache=True)
def _heap_push(heap, size, key):
    if size >= heap.shape[0]:
        bigger = np.empty(heap.shape[0] * 2, np.int64)
        bigger[:size] = heap[:size]
        heap = bigger
    heap[size] = key
    i = size
    while i > 0:
        parent = (i - 1) // 2
        if heap[parent] <= heap[i]:
            break
        heap[parent], heap[i] = heap[i], heap[parent]
        i = parent
    return heap, size + 1


@njit(cache=True)
def _heap_pop(heap, size):
    top = heap[0]
    size -= 1
    heap[0] = heap[size]
    i = 0
    while True:
        left = 2 * i + 1
        right = left + 1
        smallest = i
        if left < size and heap[left] < heap[smallest]:
            smallest = left
        if right < size and heap[right] < heap[smallest]:
            smallest = right
        if smallest == i:
            break
        heap[smallest], heap[i] = heap[i], heap[smallest]
        i = smallest
    return top, size


@njit(cache=True)
def astar_parents(blocked, start_r, start_c, goal_r, goal_c):
    """4-connected unit-cost A* with Manhattan heuristic.

    Ties are broken by (f, h, row-major index), encoded directly in the heap
    key so the expansion order is total. Returns (found, parent) where parent
    holds the row-major predecessor index, -1 where unset. The start and
    goal cells are treated as traversable regardless of their mask values;
    callers decide which blocked goals are legitimate targets.
    """
    h, w = blocked.shape
    n = h * w
    parent = np.full(n, -1, np.int32)
    found = False
    g = np.full(n, 2147483647, np.int32)
    heap = np.empty(1 << 14, np.int64)
    size = 0

    start = start_r * w + start_c
    goal = goal_r * w + goal_c
    g[start] = 0
    h0 = abs(start_r - goal_r) + abs(start_c - goal_c)
    # key layout: f in the top bits, then heuristic, then cell index
    heap, size = _heap_push(heap, size, (np.int64(h0) << 36) | (np.int64(h0) << 23) | np.int64(start))

    while size > 0:
        key, size = _heap_pop(heap, size)
        idx = int(key & ((1 << 23) - 1))
        hh = int((key >> 23) & ((1 << 13) - 1))
        f = int(key >> 36)
        if f != g[idx] + hh:
            continue  # stale entry
        if idx == goal:
            found = True
            break
        r = idx // w
        c = idx % w
        ng = g[idx] + 1
        for s in range(4):
            if s == 0:
                rr, cc = r - 1, c
            elif s == 1:
                rr, cc = r, c - 1
            elif s == 2:
                rr, cc = r, c + 1
            else:
                rr, cc = r + 1, c
            if rr < 0 or rr >= h or cc < 0 or cc >= w:
                continue
            nidx = rr * w + cc
            if blocked[rr, cc] != 0 and nidx != goal:
                continue
            if ng < g[nidx]:
                g[nidx] = ng
                parent[nidx] = idx
                nh = abs(rr - goal_r) + abs(cc - goal_c)
                nf = ng + nh
                heap, size = _heap_push(
                    heap, size,
                    (np.int64(nf) << 36) | (np.int64(nh) << 23) | np.int64(nidx))
    return found, parent


@njit(cache=True)
def unknown_integral(grid, threshold, r_lo, r_hi, c_lo, c_hi):
    """Integral image of cells with explored channel below threshold, over
    the window [r_lo, r_hi) x [c_lo, c_hi).

    Returns a (rows + 1, cols + 1) float64 array with a zero first row and
    column, so box sums are four lookups in window coordinates.
    """
    h = r_hi - r_lo
    w = c_hi - c_lo
    out = np.zeros((h + 1, w + 1), np.float64)
    for r in range(h):
        row_sum = 0.0
        for c in range(w):
            if grid[r_lo + r, c_lo + c, 1] < threshold:
                row_sum += 1.0
            out[r + 1, c + 1] = out[r, c + 1] + row_sum
    return out


@njit(cache=True)
def disc_counts(integral, rows, cols, half_widths, radius):
    """Sum an integral image over a disc around each (row, col) candidate."""
    h = integral.shape[0] - 1
    w = integral.shape[1] - 1
    k = rows.shape[0]
    out = np.empty(k, np.float64)
    for t in range(k):
        r = rows[t]
        c = cols[t]
        total = 0.0
        for dr in range(-radius, radius + 1):
            rr = r + dr
            if rr < 0 or rr >= h:
                continue
            hw = half_widths[dr + radius]
            c0 = c - hw
            c1 = c + hw
            if c0 < 0:
                c0 = 0
            if c1 >= w:
                c1 = w - 1
            if c1 < c0:
                continue
            total += (integral[rr + 1, c1 + 1] - integral[rr + 1, c0]
                      - integral[rr, c1 + 1] + integral[rr, c0])
        out[t] = total
    return out


@njit(cache=True)
def disc_argmax(integral, rows, cols, half_widths, radius, cap):
    """First argmax of the disc sums, stopping early at the cap.

    Equivalent to argmax over disc_counts (first occurrence wins) because no
    disc sum can exceed cap, the full disc area. Returns (index, count);
    index -1 when the candidate list is empty.
    """
    h = integral.shape[0] - 1
    w = integral.shape[1] - 1
    k = rows.shape[0]
    best = -1
    best_count = -1.0
    for t in range(k):
        r = rows[t]
        c = cols[t]
        total = 0.0
        for dr in range(-radius, radius + 1):
            rr = r + dr
            if rr < 0 or rr >= h:
                continue
            hw = half_widths[dr + radius]
            c0 = c - hw
            c1 = c + hw
            if c0 < 0:
                c0 = 0
            if c1 >= w:
                c1 = w - 1
            if c1 < c0:
                continue
            total += (integral[rr + 1, c1 + 1] - integral[rr + 1, c0]
                      - integral[rr, c1 + 1] + integral[rr, c0])
        if total > best_count:
            best_count = total
            best = t
            if total >= cap:
                break
    return best, best_count


@njit(cache=True)
def coarse_blocked(blocked, factor):
    """Downsample a traversability mask: a coarse cell blocks if any fine
    cell inside it blocks."""
    h, w = blocked.shape
    ch = (h + factor - 1) // factor
    cw = (w + factor - 1) // factor
    out = np.zeros((ch, cw), np.uint8)
    for r in range(h):
        ro = r // factor
        for c in range(w):
            if blocked[r, c] != 0:
                out[ro, c // factor] = 1
    return out
