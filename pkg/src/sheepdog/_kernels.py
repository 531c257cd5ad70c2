"""Compiled inner loops for the closed-loop simulator and the QP.

These mirror :func:`sheepdog.flock.velocities`, :func:`sheepdog.flock.jacobians`
and the row builders in :mod:`sheepdog.barriers`; the numpy versions stay the
readable reference and the test suite checks the two agree.
"""
from __future__ import annotations

import numpy as np
from numba import njit

# return codes of gi_solve
GI_OK = 0
GI_INFEASIBLE = 1
GI_ILL_CONDITIONED = 2
GI_ITERATIONS = 3


@njit(cache=True)
def field_and_jacobians(sheep, dogs, k_S, k_G, k_D, R_S, x_G, eps):
    """Returns (f, JS, JD, ok); ok is False when two agents are within eps."""
    n = sheep.shape[0]
    m = dogs.shape[0]
    f = np.zeros((n, 2))
    JS = np.zeros((n, n, 2, 2))
    JD = np.zeros((m, n, 2, 2))
    R3 = R_S**3
    for i in range(n):
        f[i, 0] = k_G * (x_G[0] - sheep[i, 0])
        f[i, 1] = k_G * (x_G[1] - sheep[i, 1])
        JS[i, i, 0, 0] = -k_G
        JS[i, i, 1, 1] = -k_G
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            dx = sheep[j, 0] - sheep[i, 0]
            dy = sheep[j, 1] - sheep[i, 1]
            r2 = dx * dx + dy * dy
            r = np.sqrt(r2)
            if r <= eps:
                return f, JS, JD, False
            r3 = r2 * r
            c = 1.0 - R3 / r3
            f[i, 0] += k_S * c * dx
            f[i, 1] += k_S * c * dy
            w = 3.0 * R3 / (r3 * r2)
            g00 = k_S * (c + w * dx * dx)
            g01 = k_S * w * dx * dy
            g11 = k_S * (c + w * dy * dy)
            JS[j, i, 0, 0] = g00
            JS[j, i, 0, 1] = g01
            JS[j, i, 1, 0] = g01
            JS[j, i, 1, 1] = g11
            JS[i, i, 0, 0] -= g00
            JS[i, i, 0, 1] -= g01
            JS[i, i, 1, 0] -= g01
            JS[i, i, 1, 1] -= g11
        for k in range(m):
            ex = sheep[i, 0] - dogs[k, 0]
            ey = sheep[i, 1] - dogs[k, 1]
            r2 = ex * ex + ey * ey
            r = np.sqrt(r2)
            if r <= eps:
                return f, JS, JD, False
            r3 = r2 * r
            f[i, 0] += k_D * ex / r3
            f[i, 1] += k_D * ey / r3
            w = 3.0 / (r3 * r2)
            q00 = k_D * (1.0 / r3 - w * ex * ex)
            q01 = -k_D * w * ex * ey
            q11 = k_D * (1.0 / r3 - w * ey * ey)
            JD[k, i, 0, 0] = -q00
            JD[k, i, 0, 1] = -q01
            JD[k, i, 1, 0] = -q01
            JD[k, i, 1, 1] = -q11
            JS[i, i, 0, 0] += q00
            JS[i, i, 0, 1] += q01
            JS[i, i, 1, 0] += q01
            JS[i, i, 1, 1] += q11
    return f, JS, JD, True


@njit(cache=True)
def assemble_rows(sheep, dogs, f, JS, JD, centers, radii, signs, alpha, beta, gamma, R_S, collide, box):
    """Stacked QP rows plus h and hdot per (sheep, zone).

    Row order matches :func:`sheepdog.barriers.build_constraints`. ``box``
    <= 0 means no actuator limit.
    """
    n = sheep.shape[0]
    m = dogs.shape[0]
    Z = centers.shape[0]
    rows = Z * n
    if collide:
        rows += n * m
    if box > 0:
        rows += 4 * m
    A = np.zeros((rows, 2 * m))
    b = np.zeros(rows)
    h = np.zeros((n, Z))
    hdot = np.zeros((n, Z))
    # time derivative of f_i from sheep motion alone
    fd = np.zeros((n, 2))
    for i in range(n):
        for j in range(n):
            fd[i, 0] += JS[j, i, 0, 0] * f[j, 0] + JS[j, i, 0, 1] * f[j, 1]
            fd[i, 1] += JS[j, i, 1, 0] * f[j, 0] + JS[j, i, 1, 1] * f[j, 1]
    row = 0
    for z in range(Z):
        s = signs[z]
        for i in range(n):
            rx = sheep[i, 0] - centers[z, 0]
            ry = sheep[i, 1] - centers[z, 1]
            hi = s * (rx * rx + ry * ry - radii[z] ** 2)
            hd = 2.0 * s * (rx * f[i, 0] + ry * f[i, 1])
            drift = 2.0 * s * (f[i, 0] ** 2 + f[i, 1] ** 2 + rx * fd[i, 0] + ry * fd[i, 1])
            for k in range(m):
                A[row, 2 * k] = -s * (rx * JD[k, i, 0, 0] + ry * JD[k, i, 1, 0])
                A[row, 2 * k + 1] = -s * (rx * JD[k, i, 0, 1] + ry * JD[k, i, 1, 1])
            b[row] = 0.5 * (drift + alpha * hd + beta * hi)
            h[i, z] = hi
            hdot[i, z] = hd
            row += 1
    if collide:
        for i in range(n):
            for k in range(m):
                ex = sheep[i, 0] - dogs[k, 0]
                ey = sheep[i, 1] - dogs[k, 1]
                A[row, 2 * k] = ex
                A[row, 2 * k + 1] = ey
                b[row] = 0.5 * gamma * (ex * ex + ey * ey - R_S**2) + ex * f[i, 0] + ey * f[i, 1]
                row += 1
    if box > 0:
        for c in range(2 * m):
            A[row, c] = 1.0
            b[row] = box
            A[row + 2 * m, c] = -1.0
            b[row + 2 * m] = box
            row += 1
    return A, b, h, hdot


@njit(cache=True)
def gi_solve(A, b, tol, cond_limit, max_iter):
    """Goldfarb-Idnani dual active set for min 0.5|u|^2 s.t. A u <= b.

    Returns (u, lam, active_mask, code); lam are the multipliers of 0.5|u|^2.
    """
    n_rows, dim = A.shape
    u = np.zeros(dim)
    lam = np.zeros(n_rows)
    active = np.empty(dim, dtype=np.int64)
    na = 0
    it = 0
    mask = np.zeros(n_rows, dtype=np.bool_)
    while True:
        if n_rows == 0:
            return u, lam, mask, GI_OK
        slack = b - A @ u
        p = np.argmin(slack)
        if slack[p] >= -tol:
            for q in range(na):
                mask[active[q]] = True
            return u, lam, mask, GI_OK
        npos = -A[p].copy()
        while True:
            it += 1
            if it > max_iter:
                return u, lam, mask, GI_ITERATIONS
            if na > 0:
                N = np.empty((dim, na))
                for q in range(na):
                    N[:, q] = -A[active[q]]
                Q, R = np.linalg.qr(N)
                dmin = np.inf
                dmax = 0.0
                for q in range(na):
                    v = abs(R[q, q])
                    dmin = min(dmin, v)
                    dmax = max(dmax, v)
                if dmin == 0.0 or dmax / dmin > cond_limit:
                    return u, lam, mask, GI_ILL_CONDITIONED
                Q = np.ascontiguousarray(Q)
                qn = np.ascontiguousarray(Q.T) @ npos
                r = np.linalg.solve(R, qn)
                z = npos - Q @ qn
            else:
                r = np.zeros(0)
                z = npos.copy()
            t1 = np.inf
            k_drop = -1
            for q in range(na):
                if r[q] > 0:
                    ratio = lam[active[q]] / r[q]
                    if ratio < t1:
                        t1 = ratio
                        k_drop = q
            zz = z @ npos
            full = zz > 1e-14 * max(1.0, npos @ npos)
            s_p = b[p] - A[p] @ u
            t2 = -s_p / zz if full else np.inf
            if not full and k_drop < 0:
                return u, lam, mask, GI_INFEASIBLE
            t = min(t1, t2)
            if full:
                u = u + t * z
            for q in range(na):
                lam[active[q]] -= t * r[q]
            lam[p] += t
            if full and t2 <= t1:
                active[na] = p
                na += 1
                break
            lam[active[k_drop]] = 0.0
            for q in range(k_drop, na - 1):
                active[q] = active[q + 1]
            na -= 1


@njit(cache=True)
def pairwise_min(sheep, dogs):
    """Smallest sheep-dog distance (inf without dogs)."""
    best = np.inf
    for i in range(sheep.shape[0]):
        for k in range(dogs.shape[0]):
            dx = sheep[i, 0] - dogs[k, 0]
            dy = sheep[i, 1] - dogs[k, 1]
            best = min(best, dx * dx + dy * dy)
    return np.sqrt(best)


@njit(cache=True)
def polish(A, b, u, lam, mask, tol):
    """Re-solve u and the multipliers from the final active rows.

    Keeps the incremental result if the direct solve is no better.
    """
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return u, lam
    AS = np.ascontiguousarray(A[idx])
    u_new = np.linalg.lstsq(AS, b[idx])[0]
    mu = np.linalg.lstsq(np.ascontiguousarray(AS.T), -u_new)[0]
    if mu.min() < -1e-9 * max(1.0, np.abs(mu).max()):
        return u, lam
    if A.shape[0]:
        if np.max(A @ u_new - b) > max(np.max(A @ u - b), tol):
            return u, lam
    lam = np.zeros_like(lam)
    for q in range(idx.size):
        lam[idx[q]] = max(mu[q], 0.0)
    return u_new, lam


@njit(cache=True)
def min_norm(A, b, tol, cond_limit, max_iter):
    """gi_solve followed by polish; returns (u, lam, mask, code, violation)."""
    u, lam, mask, code = gi_solve(A, b, tol, cond_limit, max_iter)
    if code != GI_OK:
        return u, lam, mask, code, np.inf
    u, lam = polish(A, b, u, lam, mask, tol)
    viol = 0.0
    if A.shape[0]:
        viol = max(0.0, np.max(A @ u - b))
    return u, lam, mask, code, viol


@njit(cache=True)
def penalized(A, b, penalty, tol, cond_limit):
    """Elastic solve of min |u|^2 + penalty |s|^2, A u <= b + s, s >= 0.

    Returns (u, s, lam, mask, code) with lam and mask restricted to A's rows.
    """
    rows, dim = A.shape
    c = 1.0 / np.sqrt(penalty)
    big = np.zeros((2 * rows, dim + rows))
    bb = np.zeros(2 * rows)
    for r in range(rows):
        big[r, :dim] = A[r]
        big[r, dim + r] = -c
        big[rows + r, dim + r] = -1.0
        bb[r] = b[r]
    z, lam, mask, code = gi_solve(big, bb, tol, cond_limit, 10 * (3 * rows + dim) + 50)
    s = np.maximum(c * z[dim:], 0.0)
    return z[:dim].copy(), s, lam[:rows].copy(), mask[:rows].copy(), code


# control_eval status codes
ST_OPTIMAL = 0
ST_INFEASIBLE = 1
ST_SINGULAR = 2


@njit(cache=True)
def control_eval(sheep, dogs, k_S, k_G, k_D, R_S, x_G, eps, centers, radii, signs,
                 alpha, beta, gamma, collide, box, penalty, tol, cond_limit):
    """Field, barrier values and the dogs' command at one state.

    Returns (u, status, f, h, hdot, violation). A failed exact solve falls
    back to the penalised one; status is INFEASIBLE if that needs slack.
    """
    n = sheep.shape[0]
    m = dogs.shape[0]
    f, JS, JD, ok = field_and_jacobians(sheep, dogs, k_S, k_G, k_D, R_S, x_G, eps)
    if not ok:
        Z = centers.shape[0]
        return np.zeros(2 * m), ST_SINGULAR, f, np.zeros((n, Z)), np.zeros((n, Z)), 0.0
    A, b, h, hdot = assemble_rows(sheep, dogs, f, JS, JD, centers, radii, signs,
                                  alpha, beta, gamma, R_S, collide, box)
    if m == 0:
        status = ST_OPTIMAL
        if b.size and b.min() < -tol:
            status = ST_INFEASIBLE
        return np.zeros(0), status, f, h, hdot, 0.0
    u, lam, mask, code, viol = min_norm(A, b, tol * 1e-2, cond_limit, 10 * (A.shape[0] + 2 * m) + 50)
    if code == GI_OK and viol <= tol:
        return u, ST_OPTIMAL, f, h, hdot, 0.0
    u, s, lam, mask, code = penalized(A, b, penalty, tol * 1e-2, cond_limit)
    if code != GI_OK:
        return np.zeros(2 * m), ST_INFEASIBLE, f, h, hdot, np.inf
    viol = s.max() if s.size else 0.0
    if viol <= tol:
        return u, ST_OPTIMAL, f, h, hdot, 0.0
    return u, ST_INFEASIBLE, f, h, hdot, viol


@njit(cache=True)
def collision_matrix(sheep, dogs, R_S):
    n = sheep.shape[0]
    m = dogs.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for k in range(m):
            dx = sheep[i, 0] - dogs[k, 0]
            dy = sheep[i, 1] - dogs[k, 1]
            out[i, k] = dx * dx + dy * dy - R_S**2
    return out


@njit(cache=True)
def _euler(sheep, dogs, headings, f, u, tau, unicycle, offset):
    n = sheep.shape[0]
    m = dogs.shape[0]
    s1 = np.empty_like(sheep)
    d1 = np.empty_like(dogs)
    th1 = headings.copy()
    for a in range(n + m):
        if a < n:
            px, py, vx, vy = sheep[a, 0], sheep[a, 1], f[a, 0], f[a, 1]
        else:
            k = a - n
            px, py, vx, vy = dogs[k, 0], dogs[k, 1], u[2 * k], u[2 * k + 1]
        if unicycle:
            c = np.cos(headings[a])
            s = np.sin(headings[a])
            v = c * vx + s * vy
            w = (-s * vx + c * vy) / offset
            bx = px - offset * c + tau * v * c
            by = py - offset * s + tau * v * s
            th = headings[a] + tau * w
            th1[a] = th
            px = bx + offset * np.cos(th)
            py = by + offset * np.sin(th)
        else:
            px += tau * vx
            py += tau * vy
        if a < n:
            s1[a, 0] = px
            s1[a, 1] = py
        else:
            d1[a - n, 0] = px
            d1[a - n, 1] = py
    return s1, d1, th1


@njit(cache=True)
def advance_interval(sheep, dogs, headings, u, f, h, hdot, k_S, k_G, k_D, R_S, x_G, eps,
                     centers, radii, signs, p1, p2, gamma, collide, box, penalty, tol, cond_limit,
                     dt, floor, unicycle, offset, decay_slack, move_fraction):
    """Integrate one control interval with adaptive explicit-Euler substeps.

    The command is re-solved at every accepted substep. A trial substep is
    halved while it lets ``v = hdot + p1 h`` (or a collision index) fall
    faster than its continuous-time law permits, or while an agent would
    move more than ``move_fraction`` of the closest sheep-dog distance;
    ``floor`` bounds the halving. Substeps driven by a relaxed command skip
    the decay test and are limited by the move cap alone.

    Returns (sheep, dogs, headings, u, status, f, h, hdot, violation,
    substeps, bad_substeps, worst_violation, singular) where the control
    fields are evaluated at the returned state.
    """
    alpha = p1 + p2
    beta = p1 * p2
    remaining = dt
    tau = dt
    count = 0
    bad = 0
    worst = 0.0
    status = ST_OPTIMAL
    viol = 0.0
    m = dogs.shape[0]
    while remaining > 0.0:
        v0 = hdot + p1 * h
        b0 = collision_matrix(sheep, dogs, R_S)
        limit = np.inf
        if m:
            speed = max(np.abs(u).max(), np.abs(f).max())
            if speed > 0.0:
                limit = move_fraction * np.sqrt(max(b0.min() + R_S**2, 0.0)) / speed
        tau = max(min(remaining, 2.0 * tau, limit), floor)
        while True:
            last = tau >= remaining * (1.0 - 1e-9)
            if last:
                tau = remaining
            s1, d1, th1 = _euler(sheep, dogs, headings, f, u, tau, unicycle, offset)
            u1, st1, f1, h1, hd1, vi1 = control_eval(s1, d1, k_S, k_G, k_D, R_S, x_G, eps, centers, radii,
                                                      signs, alpha, beta, gamma, collide, box, penalty,
                                                      tol, cond_limit)
            at_floor = tau * 0.5 < floor
            if st1 == ST_SINGULAR:
                if at_floor:
                    return (sheep, dogs, headings, u, status, f, h, hdot, viol,
                            count, bad, worst, True)
                tau *= 0.5
                continue
            # a relaxed command cannot meet the decay law, so refining is futile
            if at_floor or status != ST_OPTIMAL:
                break
            v1 = hd1 + p1 * h1
            ok = True
            for i in range(v0.shape[0]):
                for z in range(v0.shape[1]):
                    if v1[i, z] < v0[i, z] - 2.0 * p2 * tau * max(v0[i, z], 0.0) - decay_slack * tau:
                        ok = False
            if ok and collide and m:
                b1 = collision_matrix(s1, d1, R_S)
                for i in range(b0.shape[0]):
                    for k in range(m):
                        if b1[i, k] < b0[i, k] - 2.0 * gamma * tau * max(b0[i, k], 0.0) - decay_slack * tau:
                            ok = False
            if ok:
                break
            tau *= 0.5
        if status != ST_OPTIMAL:
            bad += 1
            worst = max(worst, viol)
        sheep, dogs, headings = s1, d1, th1
        u, status, f, h, hdot, viol = u1, st1, f1, h1, hd1, vi1
        count += 1
        remaining = 0.0 if last else remaining - tau
    return sheep, dogs, headings, u, status, f, h, hdot, viol, count, bad, worst, False
