"""Virial stress, pressure channels, generalized viscosity and window averages."""

from dataclasses import dataclass

import numpy as np

from .dynamics import compute_forces
from .errors import EmptyWindowError, UndefinedObservableError

DEFAULT_BLOCKS = 10
# eigenvalues of the strain-rate tensor closer than this (relative) share a channel
_CHANNEL_TOL = 1e-8

CHANNEL_DEFINITIONS = (
    "P_ext = mean of n.P.n over unit eigenvectors n of (A + A^T)/2 with the largest eigenvalue; "
    "P_con = same over the smallest eigenvalue; with A = 0 both equal trace(P)/3"
)


@dataclass(frozen=True, eq=False)
class StressRecord:
    t: float
    sigma: np.ndarray
    P: np.ndarray
    T_inst: float
    eta: float


def virial_stress(sys, cell, A=None, pair_virial=None):
    """Virial stress ``-(sum p (x) p + sum_pairs dq (x) f_ij) / det(cell)``.

    Parameters
    ----------
    sys : ParticleSystem
    cell : (3, 3) array
        Cell whose lattice defines the minimum-image pair displacements.
    A : (3, 3) array, optional
        Velocity gradient defining peculiar velocities; defaults to ``sys.A``.
    pair_virial : (3, 3) array, optional
        Precomputed pair sum.  Recomputed from ``sys.q`` and ``cell`` when
        omitted.
    """
    cell = np.asarray(cell, dtype=float)
    if A is None:
        c = sys.p
    else:
        c = sys.v - sys.q @ np.asarray(A, dtype=float).T
    if pair_virial is None:
        _, _, pair_virial = compute_forces(sys.q, cell)
    kin = c.T @ c
    return -(kin + pair_virial) / abs(np.linalg.det(cell))


def pressure(sigma):
    return -np.asarray(sigma)


def generalized_viscosity(sigma, A):
    """``eta = (sigma : gamma) / (gamma : gamma)`` with ``gamma = A + A^T``."""
    A = np.asarray(A, dtype=float)
    gamma = A + A.T
    gg = float(np.sum(gamma * gamma))
    if gg <= 1e-300 or gg <= 1e-24 * float(np.sum(A * A)):
        raise UndefinedObservableError("viscosity undefined: A + A^T = 0 (pure rotation or zero flow)")
    return float(np.sum(np.asarray(sigma) * gamma)) / gg


def channel_projectors(A):
    """Projectors onto the extensional and contractional strain-rate eigenspaces.

    Returns ``(Pi_ext, Pi_con)``, each normalised to unit trace, so that the
    channel pressure is ``sum(Pi * P)``.
    """
    A = np.asarray(A, dtype=float)
    sym = 0.5 * (A + A.T)
    scale = np.abs(sym).max()
    if scale == 0.0:
        iso = np.eye(3) / 3.0
        return iso, iso
    w, V = np.linalg.eigh(sym)
    tol = _CHANNEL_TOL * scale
    ext = V[:, w >= w.max() - tol]
    con = V[:, w <= w.min() + tol]
    return ext @ ext.T / ext.shape[1], con @ con.T / con.shape[1]


def pressure_channels(P, A):
    """Extensional and contractional pressures of ``P`` for flow ``A``."""
    pe, pc = channel_projectors(A)
    P = np.asarray(P)
    return float(np.sum(pe * P)), float(np.sum(pc * P))


def make_record(t, sigma, T_inst, A):
    try:
        eta = generalized_viscosity(sigma, A)
    except UndefinedObservableError:
        eta = float("nan")
    return StressRecord(t, sigma, -sigma, T_inst, eta)


@dataclass(frozen=True)
class WindowStat:
    mean: float
    se: float
    n: int


def block_average(x, blocks=DEFAULT_BLOCKS):
    """Mean and block standard error of a correlated series."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise EmptyWindowError("no samples to average")
    nb = min(blocks, x.size)
    means = np.array([b.mean() for b in np.array_split(x, nb)])
    mean = float(x.mean())
    if nb < 2:
        return mean, 0.0
    return mean, float(means.std(ddof=1) / np.sqrt(nb))


def window_average(records, t_from, t_to, blocks=DEFAULT_BLOCKS):
    """Window means and block standard errors per scalar channel.

    ``records`` is either a sequence of :class:`StressRecord` or a mapping
    with a ``"t"`` array and one array per channel.  Samples with
    ``t_from <= t <= t_to`` are used.
    """
    if not t_from < t_to:
        raise EmptyWindowError(f"window [{t_from}, {t_to}] is empty")
    if isinstance(records, dict):
        chans = {k: np.asarray(v, dtype=float) for k, v in records.items()}
    else:
        chans = records_to_channels(records)
    t = chans.pop("t")
    sel = (t >= t_from) & (t <= t_to)
    if not sel.any():
        raise EmptyWindowError(f"no samples in window [{t_from}, {t_to}]")
    out = {}
    for name, x in chans.items():
        mean, se = block_average(x[sel], blocks)
        out[name] = WindowStat(mean, se, int(sel.sum()))
    return out


def records_to_channels(records, A=None):
    """Flatten stress records into named scalar arrays."""
    recs = list(records)
    out = {"t": np.array([r.t for r in recs]), "T": np.array([r.T_inst for r in recs])}
    P = np.array([r.P for r in recs]).reshape(-1, 3, 3)
    for i in range(3):
        for j in range(3):
            out[f"P{'xyz'[i]}{'xyz'[j]}"] = P[:, i, j]
    out["eta"] = np.array([r.eta for r in recs])
    if A is not None:
        pe, pc = channel_projectors(A)
        out["P_ext"] = np.einsum("kij,ij->k", P, pe)
        out["P_con"] = np.einsum("kij,ij->k", P, pc)
    return out
