# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled field kernels.  Same contracts as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, atan2, fabs, log, M_PI

cnp.import_array()


cdef double _orientation(double[:, ::1] v) noexcept nogil:
    cdef Py_ssize_t n = v.shape[0], i, j
    cdef double s = 0.0
    for i in range(n):
        j = i + 1 if i + 1 < n else 0
        s += v[i, 0] * v[j, 1] - v[j, 0] * v[i, 1]
    return 1.0 if s > 0 else -1.0


def polygon_eval(verts, pts, int order=0):
    cdef double[:, ::1] v = np.ascontiguousarray(verts, dtype=np.float64)
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t m = p.shape[0], n = v.shape[0]
    phi_arr = np.empty(m)
    grad_arr = np.zeros((m, 3)) if order >= 1 else None
    hess_arr = np.zeros((m, 3, 3)) if order >= 2 else None
    cdef double[::1] phi = phi_arr
    cdef double[:, ::1] grad
    cdef double[:, :, ::1] hess
    if order >= 1:
        grad = grad_arr
    if order >= 2:
        hess = hess_arr
    cdef double sgn = -_orientation(v) / (2.0 * M_PI)
    cdef Py_ssize_t i, k, k1
    cdef double a, b, h, h2, ah, ax, ay, bx, by, ra, rb, num, den, omega
    cdef double ex, ey, length, ux, uy, px, py, pz, s, rho2, fac, kk
    cdef double cx, cy, cz, g0, g1, g2
    cdef double qx, qy, qz, ls, rb3, ra3, dfx, dfy, dfz, inv, gkx, gky, gkz
    cdef double h00, h01, h02, h10, h11, h12, h20, h21, h22
    with nogil:
        for i in range(m):
            a = p[i, 0]
            b = p[i, 1]
            h = p[i, 2]
            h2 = h * h
            ah = fabs(h)
            omega = 0.0
            g0 = 0.0; g1 = 0.0; g2 = 0.0
            h00 = 0.0; h01 = 0.0; h02 = 0.0
            h10 = 0.0; h11 = 0.0; h12 = 0.0
            h20 = 0.0; h21 = 0.0; h22 = 0.0
            for k in range(n):
                k1 = k + 1 if k + 1 < n else 0
                ax = v[k, 0] - a
                ay = v[k, 1] - b
                bx = v[k1, 0] - a
                by = v[k1, 1] - b
                ra = sqrt(ax * ax + ay * ay + h2)
                rb = sqrt(bx * bx + by * by + h2)
                num = -h * (ax * by - ay * bx)
                den = ah * ra * rb + h2 * (ra + rb) + (ax * bx + ay * by + h2) * ah
                omega += 2.0 * atan2(num, den)
                if order < 1:
                    continue
                ex = bx - ax
                ey = by - ay
                length = sqrt(ex * ex + ey * ey)
                ux = ex / length
                uy = ey / length
                px = -ax
                py = -ay
                pz = h
                s = px * ux + py * uy
                rho2 = px * px + py * py + pz * pz - s * s
                fac = (length - s) / rb + s / ra
                cx = uy * pz
                cy = -ux * pz
                cz = ux * py - uy * px
                kk = fac / rho2
                g0 += cx * kk
                g1 += cy * kk
                g2 += cz * kk
                if order < 2:
                    continue
                qx = px - length * ux
                qy = py - length * uy
                qz = pz
                ls = length - s
                rb3 = rb * rb * rb
                ra3 = ra * ra * ra
                dfx = -ux / rb - ls * qx / rb3 + ux / ra - s * px / ra3
                dfy = -uy / rb - ls * qy / rb3 + uy / ra - s * py / ra3
                dfz = -ls * qz / rb3 - s * pz / ra3
                inv = 1.0 / rho2
                gkx = dfx * inv - fac * 2.0 * (px - s * ux) * inv * inv
                gky = dfy * inv - fac * 2.0 * (py - s * uy) * inv * inv
                gkz = dfz * inv - fac * 2.0 * pz * inv * inv
                h00 += cx * gkx
                h01 += cx * gky
                h02 += cx * gkz + uy * kk
                h10 += cy * gkx
                h11 += cy * gky
                h12 += cy * gkz - ux * kk
                h20 += cz * gkx - uy * kk
                h21 += cz * gky + ux * kk
                h22 += cz * gkz
            phi[i] = sgn * omega
            if order >= 1:
                grad[i, 0] = sgn * g0
                grad[i, 1] = sgn * g1
                grad[i, 2] = sgn * g2
            if order >= 2:
                hess[i, 0, 0] = sgn * h00
                hess[i, 0, 1] = sgn * h01
                hess[i, 0, 2] = sgn * h02
                hess[i, 1, 0] = sgn * h10
                hess[i, 1, 1] = sgn * h11
                hess[i, 1, 2] = sgn * h12
                hess[i, 2, 0] = sgn * h20
                hess[i, 2, 1] = sgn * h21
                hess[i, 2, 2] = sgn * h22
    return phi_arr, grad_arr, hess_arr


def charge_eval(src, q, pts, int order=0):
    q_arr = np.asarray(q, dtype=np.float64)
    squeeze = q_arr.ndim == 1
    if squeeze:
        q_arr = q_arr[:, None]
    cdef double[:, ::1] sv = np.ascontiguousarray(src, dtype=np.float64)
    cdef double[:, ::1] qv = np.ascontiguousarray(q_arr)
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t m = p.shape[0], ns = sv.shape[0], nk = qv.shape[1]
    phi_arr = np.zeros((m, nk))
    grad_arr = np.zeros((m, 3, nk)) if order >= 1 else None
    hess_arr = np.zeros((m, 3, 3, nk)) if order >= 2 else None
    cdef double[:, ::1] phi = phi_arr
    cdef double[:, :, ::1] grad
    cdef double[:, :, :, ::1] hess
    if order >= 1:
        grad = grad_arr
    if order >= 2:
        hess = hess_arr
    cdef double c = 1.0 / (4.0 * M_PI)
    cdef Py_ssize_t i, j, n, a, b
    cdef double r[3]
    cdef double d2, inv, inv3, inv5, qq, t
    with nogil:
        for i in range(m):
            for j in range(ns):
                r[0] = p[i, 0] - sv[j, 0]
                r[1] = p[i, 1] - sv[j, 1]
                r[2] = p[i, 2] - sv[j, 2]
                d2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2]
                inv = 1.0 / sqrt(d2)
                inv3 = inv * inv * inv
                inv5 = inv3 * inv * inv
                for n in range(nk):
                    qq = c * qv[j, n]
                    phi[i, n] += qq * inv
                    if order >= 1:
                        for a in range(3):
                            grad[i, a, n] -= qq * r[a] * inv3
                    if order >= 2:
                        for a in range(3):
                            for b in range(3):
                                t = 3.0 * r[a] * r[b] * inv5
                                if a == b:
                                    t = t - inv3
                                hess[i, a, b, n] += qq * t
    if squeeze:
        return (phi_arr[:, 0],
                grad_arr[..., 0] if grad_arr is not None else None,
                hess_arr[..., 0] if hess_arr is not None else None)
    return phi_arr, grad_arr, hess_arr


def triangle_integral(corners, pts):
    cdef double[:, :, ::1] c = np.ascontiguousarray(corners, dtype=np.float64)
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t m = p.shape[0], k = c.shape[0], i, j, e, ia, ib, d
    out_arr = np.zeros((m, k))
    cdef double[:, ::1] out = out_arr
    cdef double nrm[3]
    cdef double t[3]
    cdef double u[3]
    cdef double da[3]
    cdef double db[3]
    cdef double e1[3]
    cdef double e2[3]
    cdef double w, aw, length, lm, lp, p0, rm, rp, r02, lg, ang, total, nn
    with nogil:
        for j in range(k):
            for d in range(3):
                e1[d] = c[j, 1, d] - c[j, 0, d]
                e2[d] = c[j, 2, d] - c[j, 0, d]
            nrm[0] = e1[1] * e2[2] - e1[2] * e2[1]
            nrm[1] = e1[2] * e2[0] - e1[0] * e2[2]
            nrm[2] = e1[0] * e2[1] - e1[1] * e2[0]
            nn = sqrt(nrm[0] * nrm[0] + nrm[1] * nrm[1] + nrm[2] * nrm[2])
            for d in range(3):
                nrm[d] /= nn
            for i in range(m):
                w = 0.0
                for d in range(3):
                    w += (p[i, d] - c[j, 0, d]) * nrm[d]
                aw = fabs(w)
                total = 0.0
                for e in range(3):
                    ia = e
                    ib = e + 1 if e < 2 else 0
                    length = 0.0
                    for d in range(3):
                        t[d] = c[j, ib, d] - c[j, ia, d]
                        length += t[d] * t[d]
                    length = sqrt(length)
                    for d in range(3):
                        t[d] /= length
                    u[0] = t[1] * nrm[2] - t[2] * nrm[1]
                    u[1] = t[2] * nrm[0] - t[0] * nrm[2]
                    u[2] = t[0] * nrm[1] - t[1] * nrm[0]
                    lm = 0.0; lp = 0.0; p0 = 0.0; rm = 0.0; rp = 0.0
                    for d in range(3):
                        da[d] = c[j, ia, d] - p[i, d]
                        db[d] = c[j, ib, d] - p[i, d]
                        lm += da[d] * t[d]
                        lp += db[d] * t[d]
                        p0 += da[d] * u[d]
                        rm += da[d] * da[d]
                        rp += db[d] * db[d]
                    rm = sqrt(rm)
                    rp = sqrt(rp)
                    r02 = p0 * p0 + w * w
                    if lm + lp >= 0:
                        if rm + lm > 0 and rp + lp > 0:
                            lg = log((rp + lp) / (rm + lm))
                        else:
                            lg = 0.0
                    else:
                        if rp - lp > 0 and rm - lm > 0:
                            lg = log((rm - lm) / (rp - lp))
                        else:
                            lg = 0.0
                    ang = atan2(p0 * lp, r02 + aw * rp) - atan2(p0 * lm, r02 + aw * rm)
                    total += p0 * lg - aw * ang
                out[i, j] = total
    return out_arr
