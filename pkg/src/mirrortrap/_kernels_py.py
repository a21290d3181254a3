"""Pure numpy implementations of the field kernels.

These mirror the compiled versions in ``_ckernels.pyx`` exactly and are used
when the extension is not built (or ``MIRRORTRAP_PURE_PYTHON=1``).

Polygon kernels work in plane-local coordinates ``(a, b, h)``: the polygon
lies in the ``h = 0`` plane with vertices ``(a, b)``, and ``h`` is the signed
height of the observation point.  The returned quantity is the signed solid
angle divided by ``2*pi``, i.e. the gapless-plane potential of the polygon
held at unit potential.
"""
import numpy as np

_CHUNK = 4096


def _polygon_orientation(verts):
    a, b = verts[:, 0], verts[:, 1]
    area2 = np.dot(a, np.roll(b, -1)) - np.dot(np.roll(a, -1), b)
    return 1.0 if area2 > 0 else -1.0


def polygon_eval(verts, pts, order=0):
    """Potential, gradient and Hessian of a unit-potential planar polygon.

    Returns ``(phi, grad, hess)``; ``grad`` is None for ``order < 1`` and
    ``hess`` is None for ``order < 2``.
    """
    verts = np.ascontiguousarray(verts, dtype=float)
    pts = np.ascontiguousarray(pts, dtype=float)
    m = pts.shape[0]
    phi = np.empty(m)
    grad = np.empty((m, 3)) if order >= 1 else None
    hess = np.empty((m, 3, 3)) if order >= 2 else None
    sgn = -_polygon_orientation(verts) / (2.0 * np.pi)
    for lo in range(0, m, _CHUNK):
        hi = min(lo + _CHUNK, m)
        p, g, hh = _polygon_chunk(verts, pts[lo:hi], order)
        phi[lo:hi] = sgn * p
        if order >= 1:
            grad[lo:hi] = sgn * g
        if order >= 2:
            hess[lo:hi] = sgn * hh
    return phi, grad, hess


def _polygon_chunk(verts, pts, order):
    va = verts[:, 0][None, :]
    vb = verts[:, 1][None, :]
    wa = np.roll(verts[:, 0], -1)[None, :]
    wb = np.roll(verts[:, 1], -1)[None, :]
    a = pts[:, 0:1]
    b = pts[:, 1:2]
    h = pts[:, 2:3]

    ax, ay = va - a, vb - b
    bx, by = wa - a, wb - b
    h2 = h * h
    ra = np.sqrt(ax * ax + ay * ay + h2)
    rb = np.sqrt(bx * bx + by * by + h2)
    num = -h * (ax * by - ay * bx)
    den = np.abs(h) * ra * rb + h2 * (ra + rb) + (ax * bx + ay * by + h2) * np.abs(h)
    omega = 2.0 * np.arctan2(num, den).sum(axis=1)
    if order < 1:
        return omega, None, None

    # Edge line-integral form of the solid-angle gradient.
    ex, ey = wa - va, wb - vb
    length = np.sqrt(ex * ex + ey * ey)
    ux, uy = ex / length, ey / length
    # p = P - V_i = -(A)
    px, py, pz = -ax, -ay, h + 0.0 * ax
    s = px * ux + py * uy
    rho2 = px * px + py * py + pz * pz - s * s
    fac = (length - s) / rb + s / ra
    # u x p with u = (ux, uy, 0)
    cx = uy * pz
    cy = -ux * pz
    cz = ux * py - uy * px
    k = fac / rho2
    grad = np.stack([(cx * k).sum(axis=1), (cy * k).sum(axis=1),
                     (cz * k).sum(axis=1)], axis=1)
    if order < 2:
        return omega, grad, None

    # d/dp of fac: q = p - L u, |q| = rb, |p| = ra
    qx, qy, qz = px - length * ux, py - length * uy, pz
    ls = length - s
    dfx = -ux / rb - ls * qx / rb**3 + ux / ra - s * px / ra**3
    dfy = -uy / rb - ls * qy / rb**3 + uy / ra - s * py / ra**3
    dfz = -ls * qz / rb**3 - s * pz / ra**3
    # gradient of rho^2 is 2 (p - s u)
    dx, dy, dz = px - s * ux, py - s * uy, pz
    inv = 1.0 / rho2
    gkx = dfx * inv - fac * 2.0 * dx * inv * inv
    gky = dfy * inv - fac * 2.0 * dy * inv * inv
    gkz = dfz * inv - fac * 2.0 * dz * inv * inv
    cvec = (cx, cy, cz)
    gvec = (gkx, gky, gkz)
    hess = np.empty((pts.shape[0], 3, 3))
    for j in range(3):
        for l in range(3):
            hess[:, j, l] = (cvec[j] * gvec[l]).sum(axis=1)
    # skew part [u]_x * fac / rho^2 for u = (ux, uy, 0)
    hess[:, 0, 2] += (uy * k).sum(axis=1)
    hess[:, 1, 2] -= (ux * k).sum(axis=1)
    hess[:, 2, 0] -= (uy * k).sum(axis=1)
    hess[:, 2, 1] += (ux * k).sum(axis=1)
    return omega, grad, hess


def charge_eval(src, q, pts, order=0):
    """Potential of point charges with kernel ``1/(4 pi r)``.

    ``q`` may be 1-D (one charge set) or 2-D ``(n_src, n_sets)``; the outputs
    then gain a trailing set axis.
    """
    src = np.ascontiguousarray(src, dtype=float)
    pts = np.ascontiguousarray(pts, dtype=float)
    q = np.asarray(q, dtype=float)
    squeeze = q.ndim == 1
    if squeeze:
        q = q[:, None]
    m, k = pts.shape[0], q.shape[1]
    phi = np.zeros((m, k))
    grad = np.zeros((m, 3, k)) if order >= 1 else None
    hess = np.zeros((m, 3, 3, k)) if order >= 2 else None
    c = 1.0 / (4.0 * np.pi)
    step = max(1, _CHUNK * 64 // max(src.shape[0], 1))
    for lo in range(0, m, step):
        hi = min(lo + step, m)
        r = pts[lo:hi, None, :] - src[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", r, r)
        inv = 1.0 / np.sqrt(d2)
        phi[lo:hi] = c * inv @ q
        if order >= 1:
            inv3 = inv**3
            grad[lo:hi] = -c * np.einsum("ijk,ij,jn->ikn", r, inv3, q)
        if order >= 2:
            inv5 = inv3 * inv * inv
            outer = 3.0 * np.einsum("ijk,ijl,ij,jn->ikln", r, r, inv5, q)
            diag = np.einsum("ij,jn->in", inv3, q)
            outer -= np.eye(3)[None, :, :, None] * diag[:, None, None, :]
            hess[lo:hi] = c * outer
    if squeeze:
        phi = phi[:, 0]
        grad = grad[..., 0] if grad is not None else None
        hess = hess[..., 0] if hess is not None else None
    return phi, grad, hess


def triangle_integral(corners, pts):
    """``int dA / |p - r'|`` over flat triangles, exact.

    ``corners`` is ``(k, 3, 3)`` and ``pts`` is ``(m, 3)``; returns ``(m, k)``.
    """
    corners = np.asarray(corners, dtype=float)
    pts = np.asarray(pts, dtype=float)
    v0, v1, v2 = corners[:, 0], corners[:, 1], corners[:, 2]
    n = np.cross(v1 - v0, v2 - v0)
    n /= np.linalg.norm(n, axis=1)[:, None]
    # signed height of each point above each panel plane
    w = np.einsum("mkj,kj->mk", pts[:, None, :] - v0[None], n)
    aw = np.abs(w)
    total = np.zeros_like(w)
    for a, b in ((v0, v1), (v1, v2), (v2, v0)):
        edge = b - a
        length = np.linalg.norm(edge, axis=1)
        t = edge / length[:, None]
        u = np.cross(t, n)  # outward in-plane normal for counter-clockwise winding
        da = a[None] - pts[:, None, :]
        db = b[None] - pts[:, None, :]
        lm = np.einsum("mkj,kj->mk", da, t)
        lp = np.einsum("mkj,kj->mk", db, t)
        p0 = np.einsum("mkj,kj->mk", da, u)
        rm = np.linalg.norm(da, axis=2)
        rp = np.linalg.norm(db, axis=2)
        r02 = p0 * p0 + w * w
        with np.errstate(divide="ignore", invalid="ignore"):
            fwd = (lm + lp) >= 0
            log = np.where(fwd, np.log((rp + lp) / (rm + lm)),
                           np.log((rm - lm) / (rp - lp)))
            log = np.where(np.isfinite(log), log, 0.0)
            ang = (np.arctan2(p0 * lp, r02 + aw * rp)
                   - np.arctan2(p0 * lm, r02 + aw * rm))
        total += p0 * log - aw * ang
    return total
