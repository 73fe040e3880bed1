"""Five-point (Shortley-Weller) finite-difference value of the harmonic measure
of the hole at -0.5 evaluated at the origin, on the unit disk minus disks at
+-0.5 of radius 0.15. Richardson extrapolation over three grids.

Writes the frozen value used by the acceptance harness."""
import json
import sys

import numpy as np
import pyamg
import scipy.sparse as sp

CIRCLES = [(0.0, 1.0, 0.0, "outer"), (-0.5, 0.15, 1.0, "hole"), (0.5, 0.15, 0.0, "hole")]


MARGIN = 1e-9


def inside(x, y):
    """Strict interior with a small margin, so grid points on a circle count as boundary."""
    ok = np.sqrt(x * x + y * y) < 1.0 - MARGIN
    for c, r, _, kind in CIRCLES[1:]:
        ok &= np.sqrt((x - c) ** 2 + y * y) > r + MARGIN
    return ok


def nearest_value(x, y):
    d = [abs(np.hypot(x - c, y) - r) for c, r, _, _ in CIRCLES]
    return CIRCLES[int(np.argmin(d))][2]


def hit(x, y, dx, dy, h):
    """Smallest s in (0, h] where the ray leaves the domain, and the boundary value there."""
    best, val = h * (1.0 + 1e-9), None
    for c, r, v, _ in CIRCLES:
        px, py = x - c, y
        b = px * dx + py * dy
        q = px * px + py * py - r * r
        disc = b * b - q
        if disc < 0:
            continue
        for s in (-b - np.sqrt(disc), -b + np.sqrt(disc)):
            if 1e-14 < s <= best:
                best, val = s, v
    return best, val


def solve(m):
    h = 2.0 / m
    xs = -1.0 + h * np.arange(m + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    mask = inside(X, Y)
    idx = -np.ones(X.shape, dtype=np.int64)
    idx[mask] = np.arange(mask.sum())
    rows, cols, vals = [], [], []
    rhs = np.zeros(mask.sum())
    for i, j in zip(*np.nonzero(mask)):
        k = idx[i, j]
        x, y = xs[i], xs[j]
        diag = 0.0
        for axis in (0, 1):
            arms = []
            for sgn in (-1, 1):
                dx, dy = (sgn, 0) if axis == 0 else (0, sgn)
                ii, jj = i + dx, j + dy
                s, v = hit(x, y, dx, dy, h)
                if v is not None and s < h * (1.0 - 1e-6):
                    arms.append((s, None, v))
                elif mask[ii, jj]:
                    arms.append((h, idx[ii, jj], None))
                else:
                    arms.append((h, None, nearest_value(x + h * dx, y + h * dy)))
            (hl, kl, vl), (hr, kr, vr) = arms
            cl = 2.0 / (hl * (hl + hr))
            cr = 2.0 / (hr * (hl + hr))
            diag -= cl + cr
            for c, kk, vv in ((cl, kl, vl), (cr, kr, vr)):
                if kk is None:
                    rhs[k] -= c * vv
                else:
                    rows.append(k)
                    cols.append(kk)
                    vals.append(c)
        rows.append(k)
        cols.append(k)
        vals.append(diag)
    a = sp.csr_matrix((vals, (rows, cols)), shape=(len(rhs), len(rhs)))
    ml = pyamg.ruge_stuben_solver(-a)
    u = ml.solve(-rhs, tol=1e-13, maxiter=500)
    c = m // 2
    return u[idx[c, c]]


if __name__ == "__main__":
    levels = [400, 800, 1600]
    vals = [solve(m) for m in levels]
    for m, v in zip(levels, vals):
        print(f"m={m}: {v:.10f}", file=sys.stderr)
    r1 = (4 * vals[1] - vals[0]) / 3
    r2 = (4 * vals[2] - vals[1]) / 3
    print(f"richardson: {r1:.10f} {r2:.10f}", file=sys.stderr)
    json.dump(
        {"h_hole_origin": r2, "richardson_spread": abs(r2 - r1), "grids": levels, "raw": vals},
        sys.stdout,
        indent=2,
    )
    print()
