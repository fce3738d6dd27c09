"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np

IMPLEMENTATION = "python"


def stencil_apply(cx, cy, cz, x, out, num_threads=1):
    out[...] = 0.0
    for d, c in enumerate((cx, cy, cz)):
        flux = c * np.diff(x, axis=d)
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[d] = slice(0, -1)
        hi[d] = slice(1, None)
        out[tuple(lo)] -= flux
        out[tuple(hi)] += flux
    return out


def ball_oscillation(u, xs, ys, zs, centers, radii, num_threads=1):
    centers = np.asarray(centers)
    radii = np.asarray(radii, dtype=np.float64)
    sq = np.zeros((len(centers), len(radii)))
    cnt = np.zeros((len(centers), len(radii)), dtype=np.int64)
    for c, (ci, cj, ck) in enumerate(centers):
        dx2 = (xs - xs[ci]) ** 2
        dy2 = (ys - ys[cj]) ** 2
        dz2 = (zs - zs[ck]) ** 2
        for r, rad in enumerate(radii):
            i = np.flatnonzero(dx2 <= rad * rad)
            j = np.flatnonzero(dy2 <= rad * rad)
            k = np.flatnonzero(dz2 <= rad * rad)
            if len(i) == 0 or len(j) == 0 or len(k) == 0:
                continue
            sl = (slice(i[0], i[-1] + 1), slice(j[0], j[-1] + 1), slice(k[0], k[-1] + 1))
            d2 = dx2[sl[0], None, None] + dy2[None, sl[1], None] + dz2[None, None, sl[2]]
            vals = u[sl][d2 <= rad * rad]
            if vals.size:
                dev = vals - vals.mean()
                sq[c, r] = np.dot(dev, dev)
                cnt[c, r] = vals.size
    return sq, cnt
