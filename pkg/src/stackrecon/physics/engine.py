"""Rigid-box dynamics on an infinite table plane.

Sequential-impulse contact solver: separating-axis box/box tests with
face clipping (edge/edge yields a single point), Coulomb friction clamped to
a disc, split-impulse penetration recovery so that position correction never
injects kinetic energy.  Everything hot is compiled with numba.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

MAX_CONTACTS_PER_PAIR = 16


@njit(cache=True)
def _quat_to_mat(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    m = np.empty((3, 3))
    m[0, 0] = 1 - 2 * (y * y + z * z)
    m[0, 1] = 2 * (x * y - w * z)
    m[0, 2] = 2 * (x * z + w * y)
    m[1, 0] = 2 * (x * y + w * z)
    m[1, 1] = 1 - 2 * (x * x + z * z)
    m[1, 2] = 2 * (y * z - w * x)
    m[2, 0] = 2 * (x * z - w * y)
    m[2, 1] = 2 * (y * z + w * x)
    m[2, 2] = 1 - 2 * (x * x + y * y)
    return m


@njit(cache=True)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


@njit(cache=True)
def _corners(c, r, h):
    out = np.empty((8, 3))
    k = 0
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                for d in range(3):
                    out[k, d] = c[d] + sx * h[0] * r[d, 0] + sy * h[1] * r[d, 1] + sz * h[2] * r[d, 2]
                k += 1
    return out


@njit(cache=True)
def _add_contact(cont, n_cont, a, b, p, nrm, depth):
    if n_cont >= cont.shape[0]:
        return n_cont
    cont[n_cont, 0] = a
    cont[n_cont, 1] = b
    cont[n_cont, 2:5] = p
    cont[n_cont, 5:8] = nrm
    cont[n_cont, 8] = depth
    return n_cont + 1


@njit(cache=True)
def _ground_contacts(i, c, r, h, margin, cont, n_cont):
    pts = _corners(c, r, h)
    up = np.array([0.0, 0.0, 1.0])
    for k in range(8):
        z = pts[k, 2]
        if z < margin:
            n_cont = _add_contact(cont, n_cont, i, -1, pts[k], up, -z)
    return n_cont


@njit(cache=True)
def _clip(poly, npoly, axis_dir, offset):
    """Keep the part of a polygon with axis_dir . p <= offset."""
    out = np.empty((16, 3))
    nout = 0
    for k in range(npoly):
        p = poly[k]
        q = poly[(k + 1) % npoly]
        dp = _dot(axis_dir, p) - offset
        dq = _dot(axis_dir, q) - offset
        if dp <= 0:
            if nout < 16:
                out[nout] = p
                nout += 1
        if (dp < 0 < dq) or (dq < 0 < dp):
            t = dp / (dp - dq)
            if nout < 16:
                out[nout] = p + t * (q - p)
                nout += 1
    return out, nout


@njit(cache=True)
def _face_contacts(ia, ib, ref_c, ref_r, ref_h, face_axis, nf, inc_c, inc_r, inc_h,
                   nrm, margin, cont, n_cont):
    """Clip the incident face of the other box against a reference face."""
    # incident face: outward normal most anti-parallel to nf
    best = 1e9
    bj = 0
    bs = 1.0
    for j in range(3):
        for s in (-1.0, 1.0):
            d = s * _dot(inc_r[:, j], nf)
            if d < best:
                best = d
                bj = j
                bs = s
    u = (bj + 1) % 3
    v = (bj + 2) % 3
    fc = inc_c + bs * inc_h[bj] * inc_r[:, bj]
    poly = np.empty((16, 3))
    signs = ((1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0))
    for k in range(4):
        poly[k] = fc + signs[k][0] * inc_h[u] * inc_r[:, u] + signs[k][1] * inc_h[v] * inc_r[:, v]
    npoly = 4
    for j in range(3):
        if j == face_axis:
            continue
        ax = ref_r[:, j]
        off = _dot(ax, ref_c)
        poly, npoly = _clip(poly, npoly, ax, off + ref_h[j])
        if npoly == 0:
            return n_cont
        poly, npoly = _clip(poly, npoly, -ax, -off + ref_h[j])
        if npoly == 0:
            return n_cont
    plane = _dot(nf, ref_c) + ref_h[face_axis]
    for k in range(npoly):
        depth = plane - _dot(nf, poly[k])
        if depth > -margin:
            n_cont = _add_contact(cont, n_cont, ia, ib, poly[k], nrm, depth)
    return n_cont


@njit(cache=True)
def _box_box(ia, ib, ca, ra, ha, cb, rb, hb, margin, cont, n_cont):
    d = cb - ca
    best_face_sep = -1e9
    best_face = -1
    best_face_axis = np.zeros(3)
    for k in range(6):
        if k < 3:
            L = ra[:, k].copy()
        else:
            L = rb[:, k - 3].copy()
        sa = 0.0
        sb = 0.0
        for j in range(3):
            sa += ha[j] * abs(_dot(ra[:, j], L))
            sb += hb[j] * abs(_dot(rb[:, j], L))
        sep = abs(_dot(d, L)) - sa - sb
        if sep > margin:
            return n_cont
        if sep > best_face_sep:
            best_face_sep = sep
            best_face = k
            best_face_axis = L
    best_edge_sep = -1e9
    be_i = -1
    be_j = -1
    best_edge_axis = np.zeros(3)
    for i in range(3):
        for j in range(3):
            L = _cross(ra[:, i], rb[:, j])
            ln = math.sqrt(_dot(L, L))
            if ln < 1e-6:
                continue
            L = L / ln
            sa = 0.0
            sb = 0.0
            for k in range(3):
                sa += ha[k] * abs(_dot(ra[:, k], L))
                sb += hb[k] * abs(_dot(rb[:, k], L))
            sep = abs(_dot(d, L)) - sa - sb
            if sep > margin:
                return n_cont
            if sep > best_edge_sep:
                best_edge_sep = sep
                be_i = i
                be_j = j
                best_edge_axis = L
    if be_i >= 0 and best_edge_sep > best_face_sep + 1e-4:
        L = best_edge_axis
        if _dot(d, L) > 0:
            L = -L
        # L points from B towards A
        pa = ca.copy()
        for k in range(3):
            if k != be_i:
                s = 1.0 if _dot(ra[:, k], -L) > 0 else -1.0
                pa += s * ha[k] * ra[:, k]
        pb = cb.copy()
        for k in range(3):
            if k != be_j:
                s = 1.0 if _dot(rb[:, k], L) > 0 else -1.0
                pb += s * hb[k] * rb[:, k]
        ua = ra[:, be_i]
        ub = rb[:, be_j]
        w0 = pa - pb
        aa = _dot(ua, ua)
        bb = _dot(ua, ub)
        cc = _dot(ub, ub)
        dd = _dot(ua, w0)
        ee = _dot(ub, w0)
        den = aa * cc - bb * bb
        if den < 1e-12:
            return n_cont
        s_ = (bb * ee - cc * dd) / den
        t_ = (aa * ee - bb * dd) / den
        s_ = min(max(s_, -ha[be_i]), ha[be_i])
        t_ = min(max(t_, -hb[be_j]), hb[be_j])
        p = 0.5 * ((pa + s_ * ua) + (pb + t_ * ub))
        return _add_contact(cont, n_cont, ia, ib, p, L, -best_edge_sep)
    L = best_face_axis
    nrm = -L if _dot(d, L) > 0 else L.copy()  # from B towards A
    if best_face < 3:
        # reference face on A, facing B: outward normal -nrm
        return _face_contacts(ia, ib, ca, ra, ha, best_face, -nrm, cb, rb, hb, nrm, margin, cont, n_cont)
    return _face_contacts(ia, ib, cb, rb, hb, best_face - 3, nrm, ca, ra, ha, nrm, margin, cont, n_cont)


@njit(cache=True)
def _collide(pos, rot, half, margin, cont):
    n = pos.shape[0]
    n_cont = 0
    for i in range(n):
        n_cont = _ground_contacts(i, pos[i], rot[i], half[i], margin, cont, n_cont)
    for i in range(n):
        for j in range(i + 1, n):
            n_cont = _box_box(i, j, pos[i], rot[i], half[i], pos[j], rot[j], half[j], margin, cont, n_cont)
    return n_cont


@njit(cache=True)
def _apply(v, w, inv_m, inv_i, idx, r, imp, sign):
    if idx < 0:
        return
    for d in range(3):
        v[idx, d] += sign * inv_m[idx] * imp[d]
    ang = inv_i[idx] @ _cross(r, imp)
    for d in range(3):
        w[idx, d] += sign * ang[d]


@njit(cache=True)
def _rel_vel(v, w, a, b, ra, rb):
    va = v[a] + _cross(w[a], ra)
    if b >= 0:
        return va - (v[b] + _cross(w[b], rb))
    return va


@njit(cache=True)
def _eff_mass(inv_m, inv_i, a, b, ra, rb, dirn):
    ca = _cross(ra, dirn)
    k = inv_m[a] + _dot(ca, inv_i[a] @ ca)
    if b >= 0:
        cb = _cross(rb, dirn)
        k += inv_m[b] + _dot(cb, inv_i[b] @ cb)
    return 1.0 / k


@njit(cache=True)
def _kinetic(v, w, mass, rot, inertia):
    ke = 0.0
    for i in range(v.shape[0]):
        ke += 0.5 * mass[i] * _dot(v[i], v[i])
        wb = rot[i].T @ w[i]
        for d in range(3):
            ke += 0.5 * inertia[i, d] * wb[d] * wb[d]
    return ke


@njit(cache=True)
def simulate(pos0, quat0, half, mass, n_steps, dt, gravity, mu, restitution,
             vel_iters, pos_iters, baumgarte, slop, margin):
    """Step the scene from rest; returns per-step kinetic energy, per-step
    maximum corner displacement of every body, final positions/quaternions and
    a divergence flag."""
    n = pos0.shape[0]
    pos = pos0.copy()
    quat = quat0.copy()
    v = np.zeros((n, 3))
    w = np.zeros((n, 3))
    inertia = np.empty((n, 3))
    for i in range(n):
        lx, ly, lz = 2 * half[i, 0], 2 * half[i, 1], 2 * half[i, 2]
        inertia[i, 0] = mass[i] * (ly * ly + lz * lz) / 12.0
        inertia[i, 1] = mass[i] * (lx * lx + lz * lz) / 12.0
        inertia[i, 2] = mass[i] * (lx * lx + ly * ly) / 12.0
    inv_m = 1.0 / mass
    rot = np.empty((n, 3, 3))
    for i in range(n):
        rot[i] = _quat_to_mat(quat[i])
    corners0 = np.empty((n, 8, 3))
    for i in range(n):
        corners0[i] = _corners(pos[i], rot[i], half[i])
    energy = np.zeros(n_steps)
    disp = np.zeros((n_steps, n))
    cap = 8 * n + MAX_CONTACTS_PER_PAIR * n * n
    cont = np.zeros((cap, 9))
    prev = np.zeros((cap, 8))  # a, b, point, lam_n, lam_t(world, 2 comps packed later)
    prev_t = np.zeros((cap, 3))
    n_prev = 0
    diverged = False
    for step in range(n_steps):
        inv_i = np.empty((n, 3, 3))
        for i in range(n):
            dm = np.zeros((3, 3))
            for d in range(3):
                dm[d, d] = 1.0 / inertia[i, d]
            inv_i[i] = rot[i] @ dm @ rot[i].T
        for i in range(n):
            v[i, 2] -= gravity * dt
        nc = _collide(pos, rot, half, margin, cont)
        ra = np.zeros((nc, 3))
        rb = np.zeros((nc, 3))
        t1 = np.zeros((nc, 3))
        t2 = np.zeros((nc, 3))
        kn = np.zeros(nc)
        kt1 = np.zeros(nc)
        kt2 = np.zeros(nc)
        lam_n = np.zeros(nc)
        lam_t1 = np.zeros(nc)
        lam_t2 = np.zeros(nc)
        target = np.zeros(nc)
        for c in range(nc):
            a = int(cont[c, 0])
            b = int(cont[c, 1])
            p = cont[c, 2:5]
            nrm = cont[c, 5:8]
            ra[c] = p - pos[a]
            if b >= 0:
                rb[c] = p - pos[b]
            if abs(nrm[0]) < 0.9:
                tt = _cross(nrm, np.array([1.0, 0.0, 0.0]))
            else:
                tt = _cross(nrm, np.array([0.0, 1.0, 0.0]))
            tt = tt / math.sqrt(_dot(tt, tt))
            t1[c] = tt
            t2[c] = _cross(nrm, tt)
            kn[c] = _eff_mass(inv_m, inv_i, a, b, ra[c], rb[c], nrm)
            kt1[c] = _eff_mass(inv_m, inv_i, a, b, ra[c], rb[c], t1[c])
            kt2[c] = _eff_mass(inv_m, inv_i, a, b, ra[c], rb[c], t2[c])
            depth = cont[c, 8]
            vn0 = _dot(_rel_vel(v, w, a, b, ra[c], rb[c]), nrm)
            tgt = 0.0
            if depth < 0:
                tgt = depth / dt  # may approach, closing at most the gap
            if vn0 < -0.5 and restitution > 0:
                tgt = max(tgt, -restitution * vn0)
            target[c] = tgt
            # warm start from a matching contact of the previous step
            for k in range(n_prev):
                if int(prev[k, 0]) != a or int(prev[k, 1]) != b:
                    continue
                dd = prev[k, 2:5] - p
                if _dot(dd, dd) < 1e-6:
                    lam_n[c] = prev[k, 5]
                    lam_t1[c] = _dot(prev_t[k], t1[c])
                    lam_t2[c] = _dot(prev_t[k], t2[c])
                    imp = lam_n[c] * nrm + lam_t1[c] * t1[c] + lam_t2[c] * t2[c]
                    _apply(v, w, inv_m, inv_i, a, ra[c], imp, 1.0)
                    _apply(v, w, inv_m, inv_i, b, rb[c], imp, -1.0)
                    prev[k, 0] = -2.0  # consume
                    break
        for it in range(vel_iters):
            for c in range(nc):
                a = int(cont[c, 0])
                b = int(cont[c, 1])
                nrm = cont[c, 5:8]
                vr = _rel_vel(v, w, a, b, ra[c], rb[c])
                vn = _dot(vr, nrm)
                dl = (target[c] - vn) * kn[c]
                new = max(lam_n[c] + dl, 0.0)
                dl = new - lam_n[c]
                lam_n[c] = new
                imp = dl * nrm
                _apply(v, w, inv_m, inv_i, a, ra[c], imp, 1.0)
                _apply(v, w, inv_m, inv_i, b, rb[c], imp, -1.0)
                # friction
                vr = _rel_vel(v, w, a, b, ra[c], rb[c])
                d1 = -_dot(vr, t1[c]) * kt1[c]
                d2 = -_dot(vr, t2[c]) * kt2[c]
                n1 = lam_t1[c] + d1
                n2 = lam_t2[c] + d2
                lim = mu * lam_n[c]
                mag = math.sqrt(n1 * n1 + n2 * n2)
                if mag > lim:
                    if mag > 0:
                        n1 *= lim / mag
                        n2 *= lim / mag
                d1 = n1 - lam_t1[c]
                d2 = n2 - lam_t2[c]
                lam_t1[c] = n1
                lam_t2[c] = n2
                imp = d1 * t1[c] + d2 * t2[c]
                _apply(v, w, inv_m, inv_i, a, ra[c], imp, 1.0)
                _apply(v, w, inv_m, inv_i, b, rb[c], imp, -1.0)
        for c in range(nc):
            prev[c, 0:5] = cont[c, 0:5]
            prev[c, 5] = lam_n[c]
            prev_t[c] = lam_t1[c] * t1[c] + lam_t2[c] * t2[c]
        n_prev = nc
        # split impulse: pseudo velocities only move positions
        vp = np.zeros((n, 3))
        wp = np.zeros((n, 3))
        lam_p = np.zeros(nc)
        for it in range(pos_iters):
            for c in range(nc):
                depth = cont[c, 8]
                if depth <= slop:
                    continue
                a = int(cont[c, 0])
                b = int(cont[c, 1])
                nrm = cont[c, 5:8]
                vr = _rel_vel(vp, wp, a, b, ra[c], rb[c])
                tgt = baumgarte * (depth - slop) / dt
                dl = (tgt - _dot(vr, nrm)) * kn[c]
                new = max(lam_p[c] + dl, 0.0)
                dl = new - lam_p[c]
                lam_p[c] = new
                imp = dl * nrm
                _apply(vp, wp, inv_m, inv_i, a, ra[c], imp, 1.0)
                _apply(vp, wp, inv_m, inv_i, b, rb[c], imp, -1.0)
        energy[step] = _kinetic(v, w, mass, rot, inertia)
        for i in range(n):
            for d in range(3):
                pos[i, d] += (v[i, d] + vp[i, d]) * dt
            om = w[i] + wp[i]
            qw, qx, qy, qz = quat[i, 0], quat[i, 1], quat[i, 2], quat[i, 3]
            dq0 = 0.5 * (-om[0] * qx - om[1] * qy - om[2] * qz)
            dq1 = 0.5 * (om[0] * qw + om[1] * qz - om[2] * qy)
            dq2 = 0.5 * (om[1] * qw + om[2] * qx - om[0] * qz)
            dq3 = 0.5 * (om[2] * qw + om[0] * qy - om[1] * qx)
            quat[i, 0] += dq0 * dt
            quat[i, 1] += dq1 * dt
            quat[i, 2] += dq2 * dt
            quat[i, 3] += dq3 * dt
            nq = math.sqrt(_dot(quat[i, 1:], quat[i, 1:]) + quat[i, 0] ** 2)
            for d in range(4):
                quat[i, d] /= nq
            rot[i] = _quat_to_mat(quat[i])
            cs = _corners(pos[i], rot[i], half[i])
            mx = 0.0
            for k in range(8):
                dd = cs[k] - corners0[i, k]
                mx = max(mx, math.sqrt(_dot(dd, dd)))
            disp[step, i] = mx
        if not np.isfinite(energy[step]) or energy[step] > 1e6:
            diverged = True
            for s2 in range(step, n_steps):
                energy[s2] = np.inf
            break
    return energy, disp, pos, quat, diverged
