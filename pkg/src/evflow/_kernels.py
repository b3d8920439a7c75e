"""Scalar hot kernels for plane fitting and the fused per-event pipeline.

Every kernel is written as a plain Python function over numpy arrays and
compiled with numba via :mod:`evflow._accel`. The uncompiled originals
are kept under ``*_py`` names so both backends can be timed against each
other (see :mod:`evflow.bench`).

The pipeline kernel keeps a ring buffer of the valid local flows seen in
the last ``t_past`` µs. Pooled means for the whole radius sweep are then
one pass over that buffer, binned by Chebyshev-distance ring and
prefix-summed, instead of a rescan of the largest window per radius.
"""

from __future__ import annotations

import math

from ._accel import NUMBA_AVAILABLE, jit

NEVER = -(2**62)

# Conditioning threshold for the centered 2x2 normal equations; below it
# the (x, y) scatter is treated as collinear.
RCOND = 1e-12

# Pooled means within this relative distance count as tied, and ties go
# to the smaller radius. Without the slack, summation order would decide
# the argmax between windows whose true means are equal.
TIE_EPS = 1e-9


def _fit_plane_core_py(xs, ys, ts, n):
    """Least-squares t = a*x + b*y + c over the first ``n`` points.

    Solves the centered normal equations (2x2 via Cramer). Returns
    (ok, a, b, c); ok is False when the (x, y) scatter is rank-deficient.
    """
    if n < 3:
        return False, 0.0, 0.0, 0.0
    mx = 0.0
    my = 0.0
    mt = 0.0
    for i in range(n):
        mx += xs[i]
        my += ys[i]
        mt += ts[i]
    mx /= n
    my /= n
    mt /= n
    sxx = 0.0
    sxy = 0.0
    syy = 0.0
    sxt = 0.0
    syt = 0.0
    for i in range(n):
        dx = xs[i] - mx
        dy = ys[i] - my
        dt = ts[i] - mt
        sxx += dx * dx
        sxy += dx * dy
        syy += dy * dy
        sxt += dx * dt
        syt += dy * dt
    scale = sxx if sxx > syy else syy
    det = sxx * syy - sxy * sxy
    if scale <= 0.0 or det <= RCOND * scale * scale:
        return False, 0.0, 0.0, 0.0
    a = (syy * sxt - sxy * syt) / det
    b = (sxx * syt - sxy * sxt) / det
    c = mt - a * mx - b * my
    return True, a, b, c


fit_plane_core = jit(_fit_plane_core_py)


def _make_local_flow_kernel(fit_plane_core):
    def local_flow_core(
        last,
        cx,
        cy,
        ct,
        pol,
        merged_polarity,
        radius,
        t_past,
        refit_passes,
        inlier_scale,
        inlier_fraction,
        min_fit,
        min_z,
        xs,
        ys,
        ts,
        keep,
    ):
        """Plane-fit local flow for one event on the time surface.

        Gathers the same-polarity neighborhood (the center event always
        participates), fits with up to ``refit_passes`` outlier-rejection
        refits, then gates on the inlier fraction of all gathered events.
        Returns (speed_px_s, theta_rad, valid). All failure modes collapse
        to the (0, 0, False) sentinel.
        """
        h = last.shape[1]
        w = last.shape[2]
        y0 = cy - radius
        if y0 < 0:
            y0 = 0
        y1 = cy + radius
        if y1 > h - 1:
            y1 = h - 1
        x0 = cx - radius
        if x0 < 0:
            x0 = 0
        x1 = cx + radius
        if x1 > w - 1:
            x1 = w - 1

        n = 0
        for yy in range(y0, y1 + 1):
            for xx in range(x0, x1 + 1):
                if xx == cx and yy == cy:
                    t = ct
                else:
                    t = last[pol, yy, xx]
                    if merged_polarity:
                        t2 = last[1 - pol, yy, xx]
                        if t2 > t:
                            t = t2
                    if t == NEVER or t > ct or ct - t > t_past:
                        continue
                xs[n] = float(xx)
                ys[n] = float(yy)
                ts[n] = float(t)
                n += 1
        participating = n
        if participating < min_fit:
            return 0.0, 0.0, False

        ok, a, b, c = fit_plane_core(xs, ys, ts, n)
        if not ok:
            return 0.0, 0.0, False

        fcx = float(cx)
        fcy = float(cy)
        fct = float(ct)
        for _ in range(refit_passes):
            z = math.sqrt(a * a + b * b)
            thr = inlier_scale * z
            m = 0
            for i in range(participating):
                pred = fct + a * (xs[i] - fcx) + b * (ys[i] - fcy)
                if abs(ts[i] - pred) < thr:
                    keep[i] = 1
                    m += 1
                else:
                    keep[i] = 0
            if m == participating or m < 3:
                break
            # compact inliers to the front of fresh scratch tails
            j = participating
            for i in range(participating):
                if keep[i] == 1:
                    xs[j] = xs[i]
                    ys[j] = ys[i]
                    ts[j] = ts[i]
                    j += 1
            ok2, a2, b2, c2 = fit_plane_core(xs[participating:], ys[participating:], ts[participating:], m)
            if not ok2:
                break
            if a2 == a and b2 == b and c2 == c:
                break
            a = a2
            b = b2
            c = c2

        z = math.sqrt(a * a + b * b)
        thr = inlier_scale * z
        inliers = 0
        for i in range(participating):
            pred = fct + a * (xs[i] - fcx) + b * (ys[i] - fcy)
            if abs(ts[i] - pred) < thr:
                inliers += 1
        if inliers < inlier_fraction * participating:
            return 0.0, 0.0, False
        if z < min_z:
            return 0.0, 0.0, False

        speed = 1e6 / z
        theta = math.atan2(b, a)
        if theta < 0.0:
            theta += 2.0 * math.pi
        return speed, theta, True

    return local_flow_core


_local_flow_core_py = _make_local_flow_kernel(_fit_plane_core_py)
local_flow_core = jit(_make_local_flow_kernel(fit_plane_core))


def _make_pipeline_kernel(local_flow_core):
    def pipeline_chunk(
        ev_t,
        ev_x,
        ev_y,
        ev_p,
        start,
        last,
        fs_t,
        fs_seq,
        fs_speed,
        fs_vx,
        fs_vy,
        buf_t,
        buf_x,
        buf_y,
        buf_speed,
        buf_vx,
        buf_vy,
        buf_dead,
        bstate,
        radii,
        ring_of,
        cnt,
        ssum,
        vxs,
        vys,
        pxs,
        pys,
        pts,
        pkeep,
        out_vx,
        out_vy,
        out_valid,
        out_radius,
        filter_radius,
        edl_t_past,
        refit_passes,
        inlier_scale,
        inlier_fraction,
        min_fit,
        min_z,
        pool_t_past,
        min_pool_count,
        do_pooling,
        merged_polarity,
    ):
        """Fused per-event loop over one chunk; resumable.

        Returns the index one past the last fully processed event. A
        return value below ``len(ev_t)`` means the flow ring buffer is
        full; the caller grows it and calls again with ``start`` set to
        the returned index (the event at that index has only touched the
        time surface, which is an idempotent rewrite).
        """
        n_ev = ev_t.shape[0]
        cap = buf_t.shape[0]
        nr = radii.shape[0]
        max_radius = radii[nr - 1]
        tail = bstate[0]
        head = bstate[1]

        for i in range(start, n_ev):
            t = ev_t[i]
            x = ev_x[i]
            y = ev_y[i]
            p = ev_p[i]

            last[p, y, x] = t

            speed, theta, valid = local_flow_core(
                last,
                x,
                y,
                t,
                p,
                merged_polarity,
                filter_radius,
                edl_t_past,
                refit_passes,
                inlier_scale,
                inlier_fraction,
                min_fit,
                min_z,
                pxs,
                pys,
                pts,
                pkeep,
            )

            if not valid:
                out_vx[i] = 0.0
                out_vy[i] = 0.0
                out_valid[i] = 0
                out_radius[i] = -1
                continue

            lvx = speed * math.cos(theta)
            lvy = speed * math.sin(theta)

            if do_pooling == 0:
                out_vx[i] = lvx
                out_vy[i] = lvy
                out_valid[i] = 1
                out_radius[i] = -1
                continue

            # drop entries older than the pooling window
            while tail < head and t - buf_t[tail % cap] > pool_t_past:
                tail += 1
            if head - tail == cap:
                bstate[0] = tail
                bstate[1] = head
                return i

            # step 1 writes the event's own flow before steps 2-3 read
            old = fs_seq[y, x]
            if old >= tail:
                buf_dead[old % cap] = 1  # this pixel's previous flow is superseded
            s = head % cap
            buf_t[s] = t
            buf_x[s] = x
            buf_y[s] = y
            buf_speed[s] = speed
            buf_vx[s] = lvx
            buf_vy[s] = lvy
            buf_dead[s] = 0
            fs_t[y, x] = t
            fs_seq[y, x] = head
            fs_speed[y, x] = speed
            fs_vx[y, x] = lvx
            fs_vy[y, x] = lvy
            head += 1

            for k in range(nr):
                cnt[k] = 0
                ssum[k] = 0.0
                vxs[k] = 0.0
                vys[k] = 0.0

            # live window wraps the ring at most once: scan two contiguous
            # slot ranges to keep the hot loop free of modulo arithmetic
            count = head - tail
            s0 = tail % cap
            first = cap - s0
            if first > count:
                first = count
            for seg in range(2):
                if seg == 0:
                    lo = s0
                    hi = s0 + first
                else:
                    lo = 0
                    hi = count - first
                for s in range(lo, hi):
                    if buf_dead[s] == 1:
                        continue  # superseded by a newer flow at this pixel
                    dx = buf_x[s] - x
                    if dx < 0:
                        dx = -dx
                    dy = buf_y[s] - y
                    if dy < 0:
                        dy = -dy
                    d = dx if dx > dy else dy
                    if d > max_radius:
                        continue
                    k = ring_of[d]
                    cnt[k] += 1
                    ssum[k] += buf_speed[s]
                    vxs[k] += buf_vx[s]
                    vys[k] += buf_vy[s]

            for k in range(1, nr):
                cnt[k] += cnt[k - 1]
                ssum[k] += ssum[k - 1]
                vxs[k] += vxs[k - 1]
                vys[k] += vys[k - 1]

            best_k = -1
            best_mean = -1.0
            for k in range(nr):
                if cnt[k] >= min_pool_count and cnt[k] > 0:
                    mean = ssum[k] / cnt[k]
                    if mean > best_mean + best_mean * TIE_EPS:
                        best_mean = mean
                        best_k = k
            if best_k < 0:
                # pool-count floor unreachable; fall back to any entries
                for k in range(nr):
                    if cnt[k] > 0:
                        mean = ssum[k] / cnt[k]
                        if mean > best_mean + best_mean * TIE_EPS:
                            best_mean = mean
                            best_k = k

            out_vx[i] = vxs[best_k] / cnt[best_k]
            out_vy[i] = vys[best_k] / cnt[best_k]
            out_valid[i] = 1
            out_radius[i] = radii[best_k]

        bstate[0] = tail
        bstate[1] = head
        return n_ev

    return pipeline_chunk


_pipeline_chunk_py = _make_pipeline_kernel(_local_flow_core_py)
pipeline_chunk = jit(_make_pipeline_kernel(local_flow_core))

KERNEL_BACKENDS = {"python": _pipeline_chunk_py}
if NUMBA_AVAILABLE:
    KERNEL_BACKENDS["numba"] = pipeline_chunk
