"""Lattice basis reduction for 3D periodic cells.

Cells are 3x3 arrays whose *columns* are the lattice vectors.  Selling
reduction turns any basis into an obtuse superbase; in such a basis the
Voronoi-relevant vectors are exactly the combinations with coefficients in
{0, 1}^3 (up to sign), which makes nearest-image searches and shortest-vector
queries finite and exact.
"""

import numpy as np
from numba import njit

# the seven Voronoi-relevant coefficient vectors of a Selling-reduced basis
RELEVANT = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1],
                     [1, 1, 0], [1, 0, 1], [0, 1, 1], [1, 1, 1]], dtype=np.int64)


@njit(cache=True)
def selling_reduce(cell):
    """Return ``(reduced, U)`` with ``reduced = cell @ U`` and ``U`` unimodular."""
    b = np.empty((4, 3))
    c = np.zeros((4, 3), dtype=np.int64)
    for k in range(3):
        for m in range(3):
            b[k, m] = cell[m, k]
        c[k, k] = 1
    for m in range(3):
        b[3, m] = -(b[0, m] + b[1, m] + b[2, m])
        c[3, m] = -1
    scale = 0.0
    for k in range(4):
        scale = max(scale, b[k, 0] ** 2 + b[k, 1] ** 2 + b[k, 2] ** 2)
    tol = 1e-13 * scale
    for _ in range(10000):
        hit = False
        for i in range(4):
            for j in range(i + 1, 4):
                if b[i, 0] * b[j, 0] + b[i, 1] * b[j, 1] + b[i, 2] * b[j, 2] > tol:
                    for k in range(4):
                        if k != i and k != j:
                            for m in range(3):
                                b[k, m] += b[i, m]
                                c[k, m] += c[i, m]
                    for m in range(3):
                        b[i, m] = -b[i, m]
                        c[i, m] = -c[i, m]
                    hit = True
                    break
            if hit:
                break
        if not hit:
            break
    reduced = np.empty((3, 3))
    U = np.empty((3, 3), dtype=np.int64)
    for k in range(3):
        for m in range(3):
            reduced[m, k] = b[k, m]
            U[m, k] = c[k, m]
    return reduced, U


@njit(cache=True)
def relevant_vectors(reduced):
    """The seven Voronoi-relevant vectors (rows) of a Selling-reduced basis."""
    out = np.zeros((7, 3))
    for r in range(7):
        for k in range(3):
            if RELEVANT[r, k]:
                for m in range(3):
                    out[r, m] += reduced[m, k]
    return out


@njit(cache=True)
def nearest_image(x, reduced, reduced_inv, rel):
    """Shortest representative of ``x`` modulo the lattice (exact descent)."""
    y = np.empty(3)
    for m in range(3):
        s = reduced_inv[m, 0] * x[0] + reduced_inv[m, 1] * x[1] + reduced_inv[m, 2] * x[2]
        y[m] = np.rint(s)
    z = np.empty(3)
    for m in range(3):
        z[m] = x[m] - (reduced[m, 0] * y[0] + reduced[m, 1] * y[1] + reduced[m, 2] * y[2])
    best = z[0] * z[0] + z[1] * z[1] + z[2] * z[2]
    for _ in range(1000):
        moved = False
        for r in range(7):
            for sgn in (1.0, -1.0):
                d2 = 0.0
                for m in range(3):
                    t = z[m] - sgn * rel[r, m]
                    d2 += t * t
                if d2 < best * (1.0 - 1e-14):
                    for m in range(3):
                        z[m] -= sgn * rel[r, m]
                    best = d2
                    moved = True
        if not moved:
            break
    return z


def shortest_vector(cell):
    """Length and lattice vector of the shortest nonzero vector of ``cell``."""
    reduced, _ = selling_reduce(np.ascontiguousarray(cell, dtype=float))
    rel = relevant_vectors(reduced)
    norms = np.linalg.norm(rel, axis=1)
    k = int(np.argmin(norms))
    return float(norms[k]), rel[k]


@njit(cache=True)
def _slab_heights(cell):
    vol = abs(np.linalg.det(cell))
    out = np.empty(3)
    for k in range(3):
        b = cell[:, (k + 1) % 3]
        c = cell[:, (k + 2) % 3]
        x = b[1] * c[2] - b[2] * c[1]
        y = b[2] * c[0] - b[0] * c[2]
        z = b[0] * c[1] - b[1] * c[0]
        out[k] = vol / np.sqrt(x * x + y * y + z * z)
    return out


def slab_heights(cell):
    """Distances between opposite faces of the parallelepiped spanned by ``cell``."""
    return _slab_heights(np.ascontiguousarray(cell, dtype=float))
