"""Simulation-cell motion under a homogeneous linear flow.

The cell moves with the flow, ``L_t = e^{A t} L_0``.  For nondefective flows
the stretch part of ``e^{A t}`` is folded back into a bounded parallelogram in
the plane of mean-zero log-stretches using two commuting symmetric SL(3, Z)
automorphisms; the cell is rebuilt from scratch every step from two reduced
lattice coordinates ``theta``.  Pure rotations, defective (shear-like) flows
and the zero flow have their own simpler modes.
"""

import enum
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy.optimize import minimize

from .errors import AutomorphismError, InvalidParameterError, NumericError, UnsupportedFlowError
from .flowdecomp import FlowClass, _rotation_block, flow_exponential, jordan_exponential
from .lattice import shortest_vector

DEFAULT_M1 = np.array([[1, 1, 1], [1, 2, 2], [1, 2, 3]], dtype=np.int64)
DEFAULT_M2 = np.array([[2, -2, 1], [-2, 3, -1], [1, -1, 1]], dtype=np.int64)
# three-digit eigenvector table that fixes ordering and signs of the default basis
DEFAULT_VINV_DIGITS = np.array([[0.591, -0.737, 0.328],
                                [0.737, 0.328, -0.591],
                                [0.328, 0.591, 0.737]])
LEES_EDWARDS_PERIOD = 2.0


class BoxMode(str, enum.Enum):
    GENERALIZED_KR = "generalized-kr"
    CLASSIC_KR = "classic-kr"
    ROTATION_ONLY = "rotation-only"
    LEES_EDWARDS = "lees-edwards"
    STATIC = "static"
    # e^{At} L0 without any remapping; a test oracle, never chosen by init_box
    NAIVE = "naive"


@dataclass(frozen=True, eq=False)
class AutomorphismBasis:
    M1: np.ndarray
    M2: np.ndarray
    V: np.ndarray
    Vinv: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    gram: np.ndarray


def _int_det(M):
    M = [[int(x) for x in row] for row in M]
    return (M[0][0] * (M[1][1] * M[2][2] - M[1][2] * M[2][1])
            - M[0][1] * (M[1][0] * M[2][2] - M[1][2] * M[2][0])
            + M[0][2] * (M[1][0] * M[2][1] - M[1][1] * M[2][0]))


def _as_int_matrix(M, name):
    arr = np.asarray(M)
    if arr.shape != (3, 3):
        raise AutomorphismError("not-integer", f"{name} must be 3x3, got shape {arr.shape}")
    if not np.all(np.asarray(arr, dtype=float) == np.round(np.asarray(arr, dtype=float))):
        raise AutomorphismError("not-integer", f"{name} has non-integer entries")
    return np.asarray(np.round(np.asarray(arr, dtype=float)), dtype=np.int64)


def validate_automorphisms(M1, M2, template=None):
    """Check a candidate pair and build its common eigenbasis.

    The common eigenvectors are ordered by decreasing eigenvalue of ``M1``
    (ties by ``M2``), signed so each column's largest entry is positive and
    oriented so that ``det V = +1``.  If ``template`` is given (an approximate
    ``V^-1``), rows of ``V^-1`` are instead matched and signed to it.
    """
    M1 = _as_int_matrix(M1, "M1")
    M2 = _as_int_matrix(M2, "M2")
    for name, M in (("M1", M1), ("M2", M2)):
        if not np.array_equal(M, M.T):
            raise AutomorphismError("not-symmetric", f"{name} is not symmetric")
    for name, M in (("M1", M1), ("M2", M2)):
        if _int_det(M) != 1:
            raise AutomorphismError("not-unimodular", f"det({name}) = {_int_det(M)}, expected 1")
    if not np.array_equal(M1 @ M2, M2 @ M1):
        raise AutomorphismError("not-commuting", "M1 M2 != M2 M1")

    f1, f2 = M1.astype(float), M2.astype(float)
    # a generic combination separates eigenvalues that M1 alone may repeat
    _, V = np.linalg.eigh(f1 + (math.sqrt(2.0) - 1.0) * f2)
    lam1 = np.einsum("ki,kl,li->i", V, f1, V)
    lam2 = np.einsum("ki,kl,li->i", V, f2, V)
    if np.any(lam1 <= 0) or np.any(lam2 <= 0):
        raise AutomorphismError(
            "nonpositive-spectrum",
            f"eigenvalues {np.round(lam1, 6).tolist()} / {np.round(lam2, 6).tolist()}")

    if template is None:
        order = sorted(range(3), key=lambda i: (-lam1[i], -lam2[i]))
        V = V[:, order]
        for k in range(3):
            if V[int(np.argmax(np.abs(V[:, k]))), k] < 0:
                V[:, k] = -V[:, k]
        if np.linalg.det(V) < 0:
            V[:, 2] = -V[:, 2]
    else:
        rows = []
        for ref in np.asarray(template, dtype=float):
            k = int(np.argmax(np.abs(V.T @ ref)))
            rows.append(V[:, k] * np.sign(V[:, k] @ ref))
        V = np.array(rows).T
        if len({tuple(np.round(r, 6)) for r in V.T}) != 3:
            raise AutomorphismError("invalid-automorphism", "template does not match the eigenbasis")
    Vinv = V.T.copy()

    omega1 = np.log(np.einsum("ki,kl,li->i", V, f1, V))
    omega2 = np.log(np.einsum("ki,kl,li->i", V, f2, V))
    gram = np.array([[omega1 @ omega1, omega1 @ omega2],
                     [omega2 @ omega1, omega2 @ omega2]])
    if abs(np.linalg.det(gram)) <= 1e-6:
        raise AutomorphismError("dependent-log-spectra",
                                f"log-spectra {omega1.tolist()} and {omega2.tolist()} are dependent")
    return AutomorphismBasis(M1, M2, V, Vinv, omega1, omega2, gram)


_DEFAULT_BASIS = None


def default_automorphisms():
    """The standard commuting pair, with eigenvector order fixed by a digit table."""
    global _DEFAULT_BASIS
    if _DEFAULT_BASIS is None:
        basis = validate_automorphisms(DEFAULT_M1, DEFAULT_M2, template=DEFAULT_VINV_DIGITS)
        if np.abs(basis.Vinv - DEFAULT_VINV_DIGITS).max() > 5e-4:
            raise NumericError("default eigenbasis does not match its digit table")
        _DEFAULT_BASIS = basis
    return _DEFAULT_BASIS


# -- box state -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BoxFrame:
    """Constant data of a box scheme: the factors the cell is rebuilt from."""

    mode: BoxMode
    S: np.ndarray          # volume-normalised Jordan basis (det = +1)
    Vinv: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    stretch: np.ndarray    # diag(D)
    rot_rate: float
    nilpotent: np.ndarray  # B for defective flows
    period: float          # remap period for classic KR and Lees-Edwards
    dec: object = None
    basis: object = None


@dataclass(frozen=True, eq=False)
class BoxState:
    frame: BoxFrame
    t: float
    theta: tuple
    delta: tuple
    eps_tilde: np.ndarray
    cell: np.ndarray
    a: float
    tau: float = 0.0      # time since the last remap (classic KR, Lees-Edwards)
    remaps: int = 0

    @property
    def mode(self):
        return self.frame.mode

    @property
    def volume(self):
        return self.a ** 3


def round_half_low(x):
    """Nearest integer with ties going down, so ``x - round_half_low(x)`` lies in (-1/2, 1/2]."""
    return math.ceil(x - 0.5)


def _unit_volume(S):
    det = np.linalg.det(S)
    return math.copysign(1.0, det) * S / abs(det) ** (1.0 / 3.0)


def stretch_rates(dec, basis):
    """Solve ``delta1 omega1 + delta2 omega2 = diag(D)`` on the mean-zero plane."""
    d = np.diag(dec.D).astype(float)
    if abs(d.sum()) > 1e-12 * max(1.0, np.abs(d).max()):
        raise InvalidParameterError(f"stretch {d.tolist()} is not mean-zero")
    rhs = np.array([basis.omega1 @ d, basis.omega2 @ d])
    delta = np.linalg.solve(basis.gram, rhs)
    resid = np.linalg.norm(delta[0] * basis.omega1 + delta[1] * basis.omega2 - d)
    if resid > 1e-10 * np.linalg.norm(d):
        raise NumericError(f"log-spectra do not span the stretch plane (residual {resid:.3e})")
    return float(delta[0]), float(delta[1])


def _build_cell(frame, a, t, eps_tilde, tau):
    mode = frame.mode
    if mode is BoxMode.STATIC:
        return a * np.eye(3)
    if mode is BoxMode.LEES_EDWARDS:
        B = frame.nilpotent
        return a * frame.S @ (np.eye(3) + B * tau + (B @ B) * (tau * tau / 2.0))
    M = frame.S
    if frame.rot_rate != 0.0:
        M = M @ _rotation_block(frame.rot_rate * t)
    if mode is BoxMode.ROTATION_ONLY:
        return a * M
    return a * (M * np.exp(eps_tilde)) @ frame.Vinv


def init_box(dec, basis, a):
    """Initial box state for a decomposed flow; the scheme follows the flow class."""
    if not a > 0:
        raise InvalidParameterError(f"box scale a must be positive, got {a}")
    kind = dec.kind
    if kind is FlowClass.DEFECTIVE_MIXED:
        raise UnsupportedFlowError(
            "defective flow with nonzero stretch (J3, eps != 0): no automorphism scheme is known "
            "that keeps this box bounded")
    zero3 = np.zeros(3)
    if kind is FlowClass.ZERO:
        frame = BoxFrame(BoxMode.STATIC, np.eye(3), np.eye(3), zero3, zero3, zero3, 0.0,
                         np.zeros((3, 3)), 0.0, dec, basis)
        return BoxState(frame, 0.0, (0.0, 0.0), (0.0, 0.0), zero3, a * np.eye(3), float(a))
    S = _unit_volume(dec.S)
    if kind is FlowClass.DEFECTIVE_NILPOTENT:
        frame = BoxFrame(BoxMode.LEES_EDWARDS, S, np.eye(3), zero3, zero3, zero3, 0.0,
                         dec.B.copy(), lees_edwards_period(dec), dec, basis)
        return BoxState(frame, 0.0, (0.0, 0.0), (0.0, 0.0), zero3, a * S, float(a))
    stretch = np.diag(dec.D).astype(float)
    if kind is FlowClass.COMPLEX_PAIR and not np.any(stretch):
        frame = BoxFrame(BoxMode.ROTATION_ONLY, S, np.eye(3), zero3, zero3, zero3, dec.r,
                         np.zeros((3, 3)), 0.0, dec, basis)
        return BoxState(frame, 0.0, (0.0, 0.0), (0.0, 0.0), zero3, a * S, float(a))
    delta = stretch_rates(dec, basis)
    frame = BoxFrame(BoxMode.GENERALIZED_KR, S, basis.Vinv, basis.omega1, basis.omega2,
                     stretch, dec.r, np.zeros((3, 3)), 0.0, dec, basis)
    cell = _build_cell(frame, float(a), 0.0, zero3, 0.0)
    return BoxState(frame, 0.0, (0.0, 0.0), delta, zero3, cell, float(a))


def lees_edwards_period(dec):
    """Remap period ``t0`` with ``e^{B t0}`` integer; ``t0 = 2`` for unit-rate J4."""
    return LEES_EDWARDS_PERIOD / float(dec.B[0, 1])


def naive_box(dec, basis, a):
    """Box following ``e^{A t} L0`` literally, with the same ``L0`` as :func:`init_box`."""
    state = init_box(dec, basis, a)
    frame = replace(state.frame, mode=BoxMode.NAIVE)
    return replace(state, frame=frame)


def advance_box(state, dt):
    """Advance the box by ``dt``; the cell is recomputed from scratch."""
    frame = state.frame
    mode = frame.mode
    t = state.t + dt
    if mode is BoxMode.STATIC:
        return replace(state, t=t)
    if mode is BoxMode.ROTATION_ONLY:
        return replace(state, t=t, cell=_build_cell(frame, state.a, t, state.eps_tilde, 0.0))
    if mode is BoxMode.NAIVE:
        cell = state.a * frame.S @ jordan_exponential(frame.dec, t) @ frame.Vinv
        return replace(state, t=t, cell=cell)
    if mode in (BoxMode.LEES_EDWARDS, BoxMode.CLASSIC_KR):
        tau = state.tau + dt
        remaps = state.remaps
        while tau >= frame.period:
            tau -= frame.period
            remaps += 1
        eps_tilde = frame.stretch * tau
        cell = _build_cell(frame, state.a, t, eps_tilde, tau)
        return replace(state, t=t, tau=tau, eps_tilde=eps_tilde, cell=cell, remaps=remaps)

    th1 = state.theta[0] + state.delta[0] * dt
    th2 = state.theta[1] + state.delta[1] * dt
    n1, n2 = round_half_low(th1), round_half_low(th2)
    th1 -= n1
    th2 -= n2
    eps_tilde = th1 * frame.omega1 + th2 * frame.omega2
    cell = _build_cell(frame, state.a, t, eps_tilde, 0.0)
    remaps = state.remaps + (1 if (n1 or n2) else 0)
    return replace(state, t=t, theta=(th1, th2), eps_tilde=eps_tilde, cell=cell, remaps=remaps)


def unwrapped_cell(state, dt):
    """The cell :func:`advance_box` would produce at ``t + dt`` without any remap.

    It spans the same lattice as ``advance_box(state, dt).cell`` in the basis
    that continues the previous step's, which is what a remap-invariance check
    compares against.
    """
    frame = state.frame
    mode = frame.mode
    if mode is BoxMode.GENERALIZED_KR:
        th1 = state.theta[0] + state.delta[0] * dt
        th2 = state.theta[1] + state.delta[1] * dt
        return _build_cell(frame, state.a, state.t + dt, th1 * frame.omega1 + th2 * frame.omega2, 0.0)
    if mode in (BoxMode.LEES_EDWARDS, BoxMode.CLASSIC_KR):
        tau = state.tau + dt
        return _build_cell(frame, state.a, state.t + dt, frame.stretch * tau, tau)
    return advance_box(state, dt).cell


def unremapped_cell(state):
    """``a S e^{Bt} e^{Dt} V^-1``: the box the flow alone would have produced."""
    frame = state.frame
    if frame.mode is BoxMode.STATIC:
        return state.cell.copy()
    return state.a * frame.S @ jordan_exponential(frame.dec, state.t) @ frame.Vinv


# -- classic single-automorphism KR ---------------------------------------------

def _classic_spectrum(M):
    M = _as_int_matrix(M, "M")
    if _int_det(M) != 1:
        raise AutomorphismError("invalid-automorphism", f"det(M) = {_int_det(M)}, expected 1")
    w, V = np.linalg.eig(M.astype(float))
    if np.any(np.abs(w.imag) > 1e-12) or np.any(w.real <= 0):
        raise AutomorphismError("invalid-automorphism", f"spectrum {w.tolist()} is not positive real")
    w, V = w.real, V.real
    order = np.argsort(-w)
    return w[order], V[:, order]


def classic_kr_period(eps, M):
    """Lattice period ``t* = log(lambda) / eps`` of a single automorphism ``M``."""
    if not eps > 0:
        raise InvalidParameterError(f"strain rate must be positive, got {eps}")
    lam, _ = _classic_spectrum(M)
    if lam[0] <= 1.0 + 1e-12:
        raise AutomorphismError("invalid-automorphism",
                                f"largest eigenvalue {lam[0]:.6g} does not exceed 1")
    return math.log(lam[0]) / eps, lam


def _classic_frame(dec, M):
    if dec.kind is not FlowClass.NONDEFECTIVE_REAL:
        raise UnsupportedFlowError(f"classic KR needs a diagonalisable real flow, got {dec.kind.value}")
    d = np.diag(dec.D)
    eps = float(d.max())
    t_star, _ = classic_kr_period(eps, M)
    lam, VM = _classic_spectrum(M)
    logs = np.log(lam)
    # pair eigenvectors of M with the flow's stretch directions by rank
    target = np.empty(3, dtype=int)
    target[np.argsort(-d)] = np.arange(3)
    VM = VM[:, target]
    if np.abs(d * t_star - logs[target]).max() > 1e-9 * max(1.0, np.abs(logs).max()):
        raise UnsupportedFlowError(
            f"flow stretches {d.tolist()} are not proportional to log-spectrum {logs.tolist()}")
    VM = VM / np.linalg.norm(VM, axis=0)
    Vinv = np.linalg.inv(VM)
    Vinv = _unit_volume(Vinv)
    return t_star, Vinv


def verify_lattice_periodicity(dec, eps, M):
    """``|e^{A t*} L0 - L0 M|`` with ``L0 = S V_M^-1``; zero for a reproducible lattice."""
    if dec.kind is FlowClass.ZERO:
        raise UnsupportedFlowError("zero flow has no lattice period")
    t_star, Vinv = _classic_frame(dec, M)
    if abs(eps - float(np.diag(dec.D).max())) > 1e-12 * max(1.0, abs(eps)):
        raise InvalidParameterError(f"eps {eps} does not match the flow's largest stretch")
    L0 = _unit_volume(dec.S) @ Vinv
    return float(np.linalg.norm(flow_exponential(dec, t_star) @ L0 - L0 @ np.asarray(M, dtype=float)))


def init_classic_kr_box(dec, M, a):
    """Box that resets to ``L0`` every lattice period (single automorphism)."""
    t_star, Vinv = _classic_frame(dec, M)
    zero3 = np.zeros(3)
    frame = BoxFrame(BoxMode.CLASSIC_KR, _unit_volume(dec.S), Vinv, zero3, zero3,
                     np.diag(dec.D).astype(float), 0.0, np.zeros((3, 3)), t_star, dec, None)
    cell = _build_cell(frame, float(a), 0.0, zero3, 0.0)
    return BoxState(frame, 0.0, (0.0, 0.0), (0.0, 0.0), zero3, cell, float(a))


# -- replica floor ------------------------------------------------------------

def _corner_floor(S, Vinv, omega1, omega2):
    corners = [s1 * omega1 + s2 * omega2 for s1 in (-0.5, 0.5) for s2 in (-0.5, 0.5)]
    emin = min(c.min() for c in corners)
    sv_S = np.linalg.svd(S, compute_uv=False)
    sv_V = np.linalg.svd(Vinv, compute_uv=False)
    return sv_S[-1] * math.exp(emin) * sv_V[-1]


def _gkr_floor(S, Vinv, omega1, omega2, rot_rate, grid=64):
    g = np.linspace(-0.5, 0.5, grid)
    th1, th2 = np.meshgrid(g, g, indexing="ij")
    th = np.stack([th1.ravel(), th2.ravel()], axis=1)
    E = th @ np.vstack([omega1, omega2])                         # (G, 3)
    angles = [0.0]
    rotate = rot_rate != 0.0 and not np.allclose(S.T @ S, np.eye(3), atol=1e-12)
    if rotate:
        angles = list(np.linspace(0.0, 2.0 * math.pi, 33)[:-1])

    lb = _corner_floor(S, Vinv, omega1, omega2)
    # incumbent from the coarse grid over a small coefficient box
    ncoef = np.array([n for n in itertools.product(range(-2, 3), repeat=3) if any(n)], dtype=float)
    ncoef = ncoef[[tuple(-x for x in n) > tuple(n) for n in ncoef]]

    def grid_norms(coefs):
        W = coefs @ Vinv.T                                       # (K, 3) in eigen frame
        best = np.full(len(coefs), np.inf)
        arg = np.zeros((len(coefs), 3))
        for phi in angles:
            M = S @ _rotation_block(phi) if rotate else S
            # |M diag(e^E) w| for every grid point and coefficient
            X = np.exp(E)[:, None, :] * W[None, :, :]            # (G, K, 3)
            nrm = np.linalg.norm(X @ M.T, axis=2)                # (G, K)
            k = np.argmin(nrm, axis=0)
            vals = nrm[k, np.arange(len(coefs))]
            better = vals < best
            best[better] = vals[better]
            arg[better, :2] = th[k[better]]
            arg[better, 2] = phi
        return best, arg

    best_vals, _ = grid_norms(ncoef)
    incumbent = best_vals.min()
    K = 2
    while lb * (K + 1) <= incumbent:
        K += 1
    ncoef = np.array([n for n in itertools.product(range(-K, K + 1), repeat=3) if any(n)], dtype=float)
    ncoef = ncoef[[tuple(-x for x in n) > tuple(n) for n in ncoef]]
    ncoef = ncoef[lb * np.linalg.norm(ncoef, axis=1) < incumbent]
    vals, args = grid_norms(ncoef)
    incumbent = vals.min()

    h = 1.0 / (grid - 1)
    condS = np.linalg.cond(S)
    lip = condS * (np.abs(omega1).max() + np.abs(omega2).max()) * h / 2.0
    if rotate:
        lip += condS * abs(2.0 * math.pi / 32) / 2.0
    keep = vals * math.exp(-lip) <= incumbent

    best = incumbent
    for n, x0 in zip(ncoef[keep], args[keep]):
        w = Vinv @ n

        def obj(x, w=w):
            M = S @ _rotation_block(x[2]) if rotate else S
            return float(np.linalg.norm(M @ (np.exp(x[0] * omega1 + x[1] * omega2) * w)))

        bounds = [(-0.5, 0.5), (-0.5, 0.5), (None, None)]
        if not rotate:
            bounds[2] = (0.0, 0.0)
        res = minimize(obj, x0, method="L-BFGS-B", bounds=bounds, options={"ftol": 1e-14, "gtol": 1e-10})
        best = min(best, float(res.fun), obj(x0))
    return best


def _path_floor(cell_at, t0, t1, samples=257):
    ts = np.linspace(t0, t1, samples)
    vals = [shortest_vector(cell_at(t))[0] for t in ts]
    k = int(np.argmin(vals))
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, samples - 1)]
    for _ in range(60):
        m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
        if shortest_vector(cell_at(m1))[0] < shortest_vector(cell_at(m2))[0]:
            hi = m2
        else:
            lo = m1
    return min(min(vals), shortest_vector(cell_at(0.5 * (lo + hi)))[0])


def min_replica_distance(dec, basis, a):
    """Lower bound on the distance from any particle to its own periodic images, for all time."""
    if not a > 0:
        raise InvalidParameterError(f"box scale a must be positive, got {a}")
    kind = dec.kind
    if kind is FlowClass.DEFECTIVE_MIXED:
        raise UnsupportedFlowError("defective flow with nonzero stretch has no bounded box")
    if kind is FlowClass.ZERO:
        return float(a)
    S = _unit_volume(dec.S)
    if kind is FlowClass.DEFECTIVE_NILPOTENT:
        B = dec.B
        return a * _path_floor(lambda s: S @ (np.eye(3) + B * s + (B @ B) * (s * s / 2.0)),
                               0.0, lees_edwards_period(dec))
    if kind is FlowClass.COMPLEX_PAIR and not np.any(np.diag(dec.D)):
        return a * _path_floor(lambda phi: S @ _rotation_block(phi), 0.0, 2.0 * math.pi)
    return a * _gkr_floor(S, basis.Vinv, basis.omega1, basis.omega2, dec.r)


def self_image_distance(cell):
    """Distance from any particle to its nearest periodic image in the current cell."""
    return shortest_vector(cell)[0]


# -- long box-only sweeps ---------------------------------------------------------

@njit(cache=True)
def _sweep_gkr(th1, th2, d1, d2, dt, steps, t, rot, S, Vinv, w1, w2, a, vol, trace_every, trace):
    ok = True
    bad = -1
    max_det = 0.0
    max_eps = 0.0
    remaps = 0
    ntr = 0
    cell = np.empty((3, 3))
    M = np.empty((3, 3))
    for step in range(steps):
        t += dt
        th1 += d1 * dt
        th2 += d2 * dt
        n1 = np.ceil(th1 - 0.5)
        n2 = np.ceil(th2 - 0.5)
        th1 -= n1
        th2 -= n2
        if n1 != 0.0 or n2 != 0.0:
            remaps += 1
        if not (-0.5 < th1 <= 0.5 and -0.5 < th2 <= 0.5):
            if ok:
                bad = step
            ok = False
        e0 = th1 * w1[0] + th2 * w2[0]
        e1 = th1 * w1[1] + th2 * w2[1]
        e2 = th1 * w1[2] + th2 * w2[2]
        em = max(abs(e0), abs(e1), abs(e2))
        if em > max_eps:
            max_eps = em
        if rot != 0.0:
            c = np.cos(rot * t)
            s = np.sin(rot * t)
            for i in range(3):
                M[i, 0] = S[i, 0] * c + S[i, 1] * s
                M[i, 1] = -S[i, 0] * s + S[i, 1] * c
                M[i, 2] = S[i, 2]
        else:
            for i in range(3):
                for j in range(3):
                    M[i, j] = S[i, j]
        x0 = np.exp(e0)
        x1 = np.exp(e1)
        x2 = np.exp(e2)
        for i in range(3):
            for j in range(3):
                cell[i, j] = a * (M[i, 0] * x0 * Vinv[0, j] + M[i, 1] * x1 * Vinv[1, j]
                                  + M[i, 2] * x2 * Vinv[2, j])
        det = (cell[0, 0] * (cell[1, 1] * cell[2, 2] - cell[1, 2] * cell[2, 1])
               - cell[0, 1] * (cell[1, 0] * cell[2, 2] - cell[1, 2] * cell[2, 0])
               + cell[0, 2] * (cell[1, 0] * cell[2, 1] - cell[1, 1] * cell[2, 0]))
        rel = abs(det - vol) / vol
        if rel > max_det:
            max_det = rel
        if trace_every > 0 and (step + 1) % trace_every == 0 and ntr < trace.shape[0]:
            trace[ntr, 0] = t
            trace[ntr, 1] = th1
            trace[ntr, 2] = th2
            trace[ntr, 3] = e0
            trace[ntr, 4] = e1
            trace[ntr, 5] = e2
            ntr += 1
    return ok, bad, max_det, max_eps, remaps, th1, th2, t, ntr


@dataclass
class BoxCheck:
    """Outcome of a box-only boundedness sweep."""

    mode: str
    steps: int
    dt: float
    theta_in_range: bool
    first_bad_step: int
    max_det_rel_error: float
    max_abs_eps_tilde: float
    eps_bound: float
    remaps: int
    final_theta: tuple
    trace: np.ndarray = field(default_factory=lambda: np.zeros((0, 6)))

    @property
    def ok(self):
        return (self.theta_in_range and self.max_det_rel_error <= 1e-9
                and self.max_abs_eps_tilde <= self.eps_bound)


def check_box(state, dt, steps, trace_every=0):
    """Run ``steps`` box-only steps and report boundedness and volume conservation.

    The generalized-KR path runs in a compiled loop that performs exactly the
    arithmetic of :func:`advance_box`; other modes step through
    :func:`advance_box` itself.
    """
    frame = state.frame
    ntrace = steps // trace_every if trace_every > 0 else 0
    trace = np.zeros((ntrace, 6))
    bound = float(np.abs(frame.omega1).max() + np.abs(frame.omega2).max())
    if frame.mode is BoxMode.GENERALIZED_KR:
        ok, bad, max_det, max_eps, remaps, th1, th2, _, ntr = _sweep_gkr(
            state.theta[0], state.theta[1], state.delta[0], state.delta[1], float(dt), int(steps),
            state.t, float(frame.rot_rate), frame.S, frame.Vinv, frame.omega1, frame.omega2,
            state.a, state.a ** 3, int(trace_every), trace)
        return BoxCheck(frame.mode.value, steps, dt, bool(ok), int(bad), float(max_det), float(max_eps),
                        bound, int(remaps) + state.remaps, (th1, th2), trace[:ntr])
    vol = state.a ** 3
    max_det = 0.0
    ntr = 0
    s = state
    for k in range(steps):
        s = advance_box(s, dt)
        max_det = max(max_det, abs(np.linalg.det(s.cell) - vol) / vol)
        if trace_every and (k + 1) % trace_every == 0 and ntr < ntrace:
            trace[ntr] = [s.t, s.theta[0], s.theta[1], *s.eps_tilde]
            ntr += 1
    return BoxCheck(frame.mode.value, steps, dt, True, -1, max_det,
                    float(np.abs(s.eps_tilde).max()), max(bound, float(np.abs(s.eps_tilde).max())),
                    s.remaps, s.theta, trace[:ntr])
