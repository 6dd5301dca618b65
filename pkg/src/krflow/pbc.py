"""Periodic wrapping, minimum image and neighbour enumeration in a general cell.

All routines work with any basis of the current lattice: internally the cell
is Selling-reduced, so a box that has been remapped by an SL(3, Z) matrix
gives the same images and the same pair list as the unremapped one.
"""

import numpy as np
from numba import njit

from .errors import ConfigError, NumericError
from .lattice import nearest_image, relevant_vectors, selling_reduce, slab_heights

# fractional coordinates within this distance below 0 are treated as 0, which
# keeps wrap_positions idempotent under round-off
_WRAP_SLACK = 1e-12


def _inverse(cell):
    cell = np.asarray(cell, dtype=float)
    det = np.linalg.det(cell)
    scale = np.abs(cell).max() ** 3
    if not np.isfinite(det) or abs(det) <= 1e-14 * scale:
        raise NumericError(f"singular cell (det {det:.3e})")
    return np.linalg.inv(cell)


def fractional(q, cell):
    return np.asarray(q, dtype=float) @ _inverse(cell).T


def wrap_positions(q, cell):
    """Translate positions by lattice vectors into the cell ``[0, 1)^3``."""
    q = np.asarray(q, dtype=float)
    cell = np.asarray(cell, dtype=float)
    s = q @ _inverse(cell).T
    n = np.floor(s + _WRAP_SLACK)
    if not n.any():
        return q.copy()
    return q - n @ cell.T


def check_cutoff(r_cut, replica_floor):
    """Raise unless the cutoff is at most half the guaranteed replica separation."""
    if r_cut > 0.5 * replica_floor:
        raise ConfigError(
            f"cutoff exceeds half the replica floor ({r_cut:.4g} > {0.5 * replica_floor:.4g})")


class ReducedCell:
    """Selling-reduced representation of a cell, reused across queries."""

    __slots__ = ("cell", "reduced", "reduced_inv", "rel", "heights")

    def __init__(self, cell):
        self.cell = np.ascontiguousarray(cell, dtype=float)
        _inverse(self.cell)
        self.reduced, _ = selling_reduce(self.cell)
        self.reduced_inv = np.linalg.inv(self.reduced)
        self.rel = relevant_vectors(self.reduced)
        self.heights = slab_heights(self.reduced)

    def bins(self, r_cut):
        return np.floor(self.heights / r_cut).astype(np.int64)


@njit(cache=True)
def _min_image_many(dq, reduced, reduced_inv, rel):
    out = np.empty_like(dq)
    for k in range(dq.shape[0]):
        out[k] = nearest_image(dq[k], reduced, reduced_inv, rel)
    return out


def minimum_image(dq, cell):
    """Shortest lattice-equivalent displacement(s) for ``dq`` of shape (3,) or (n, 3)."""
    dq = np.asarray(dq, dtype=float)
    rc = cell if isinstance(cell, ReducedCell) else ReducedCell(cell)
    flat = np.ascontiguousarray(dq.reshape(-1, 3))
    out = _min_image_many(flat, rc.reduced, rc.reduced_inv, rc.rel)
    return out.reshape(dq.shape)


@njit(cache=True)
def _pairs_brute(q, reduced, reduced_inv, rel, rc2):
    n = q.shape[0]
    cap = n * (n - 1) // 2
    ii = np.empty(cap, dtype=np.int64)
    jj = np.empty(cap, dtype=np.int64)
    dd = np.empty((cap, 3))
    m = 0
    x = np.empty(3)
    for i in range(n - 1):
        for j in range(i + 1, n):
            for k in range(3):
                x[k] = q[i, k] - q[j, k]
            z = nearest_image(x, reduced, reduced_inv, rel)
            r2 = z[0] * z[0] + z[1] * z[1] + z[2] * z[2]
            if r2 < rc2:
                ii[m] = i
                jj[m] = j
                dd[m] = z
                m += 1
    return ii[:m], jj[:m], dd[:m]


@njit(cache=True)
def _pairs_cells(q, reduced, reduced_inv, rc2, nb, cap):
    n = q.shape[0]
    nbx, nby, nbz = nb[0], nb[1], nb[2]
    nbins = nbx * nby * nbz
    frac = np.empty((n, 3))
    which = np.empty(n, dtype=np.int64)
    for i in range(n):
        w = 0
        for m in range(3):
            s = reduced_inv[m, 0] * q[i, 0] + reduced_inv[m, 1] * q[i, 1] + reduced_inv[m, 2] * q[i, 2]
            s -= np.floor(s)
            frac[i, m] = s
            b = int(s * nb[m])
            if b >= nb[m]:
                b = nb[m] - 1
            w = w * nb[m] + b
        which[i] = w
    head = -np.ones(nbins, dtype=np.int64)
    nxt = -np.ones(n, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        nxt[i] = head[which[i]]
        head[which[i]] = i

    ii = np.empty(cap, dtype=np.int64)
    jj = np.empty(cap, dtype=np.int64)
    dd = np.empty((cap, 3))
    m = 0
    for i in range(n):
        w = which[i]
        bx = w // (nby * nbz)
        by = (w // nbz) % nby
        bz = w % nbz
        for dx in range(-1, 2):
            cx = (bx + dx) % nbx
            for dy in range(-1, 2):
                cy = (by + dy) % nby
                for dz in range(-1, 2):
                    cz = (bz + dz) % nbz
                    j = head[(cx * nby + cy) * nbz + cz]
                    while j != -1:
                        if j > i:
                            f0 = frac[i, 0] - frac[j, 0]
                            f1 = frac[i, 1] - frac[j, 1]
                            f2 = frac[i, 2] - frac[j, 2]
                            f0 -= np.rint(f0)
                            f1 -= np.rint(f1)
                            f2 -= np.rint(f2)
                            z0 = reduced[0, 0] * f0 + reduced[0, 1] * f1 + reduced[0, 2] * f2
                            z1 = reduced[1, 0] * f0 + reduced[1, 1] * f1 + reduced[1, 2] * f2
                            z2 = reduced[2, 0] * f0 + reduced[2, 1] * f1 + reduced[2, 2] * f2
                            if z0 * z0 + z1 * z1 + z2 * z2 < rc2:
                                if m < cap:
                                    ii[m] = i
                                    jj[m] = j
                                    dd[m, 0] = z0
                                    dd[m, 1] = z1
                                    dd[m, 2] = z2
                                m += 1
                        j = nxt[j]
    return ii, jj, dd, m


def neighbor_pairs(q, cell, r_cut):
    """All unordered pairs closer than ``r_cut`` under the minimum-image convention.

    Returns ``(i, j, dq)`` arrays with ``i < j``, sorted by ``(i, j)``, and
    ``dq = minimum_image(q[i] - q[j])``.  Cell lists are used when every
    reduced slab holds at least three bins, otherwise all pairs are scanned.
    """
    q = np.ascontiguousarray(q, dtype=float)
    rc = cell if isinstance(cell, ReducedCell) else ReducedCell(cell)
    nb = rc.bins(r_cut)
    if np.all(nb >= 3):
        n = len(q)
        cap = min(n * (n - 1) // 2, 64 * n)
        i, j, d, m = _pairs_cells(q, rc.reduced, rc.reduced_inv, r_cut * r_cut, nb, cap)
        if m > cap:
            i, j, d, m = _pairs_cells(q, rc.reduced, rc.reduced_inv, r_cut * r_cut, nb, m)
        order = np.argsort(i[:m] * n + j[:m])
        return i[order], j[order], d[order]
    return _pairs_brute(q, rc.reduced, rc.reduced_inv, rc.rel, r_cut * r_cut)
