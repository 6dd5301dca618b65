"""Real Jordan decomposition of trace-free 3x3 velocity gradients.

Every incompressible linear flow ``A`` is written as ``A = S (D + B) S^-1``
with ``D`` diagonal (the stretch part) and ``B`` either a rotation generator
(complex eigenvalues), a nilpotent block (defective flows) or zero.  The
box-motion schemes in :mod:`krflow.boxmotion` consume these factors.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidFlowError, InvalidParameterError, NumericError, UnsupportedFlowError

DEFAULT_TOL = 1e-8
# singular values (relative to |A|) below this count as zero when deciding
# eigenspace dimension
_RANK_TOL = 1e-6
_EPS = np.finfo(float).eps


class FlowClass(str, enum.Enum):
    NONDEFECTIVE_REAL = "nondefective-real"
    COMPLEX_PAIR = "complex-pair"
    DEFECTIVE_NILPOTENT = "defective-nilpotent"
    DEFECTIVE_MIXED = "defective-mixed"
    ZERO = "zero"


class FlowKind(str, enum.Enum):
    PEF = "pef"
    USF = "usf"
    BSF = "bsf"
    SHEAR = "shear"
    MIXED = "mixed"


@dataclass(frozen=True, eq=False)
class FlowDecomposition:
    """``A S = S (D + B)`` together with the flow class."""

    kind: FlowClass
    A: np.ndarray
    S: np.ndarray
    D: np.ndarray
    B: np.ndarray

    @property
    def eps(self):
        """Diagonal of the stretch part, in the column order of ``S``."""
        return np.diag(self.D).copy()

    @property
    def r(self):
        """Rotation rate of a complex pair (zero otherwise)."""
        if self.kind is FlowClass.COMPLEX_PAIR:
            return float(self.B[1, 0])
        return 0.0

    @property
    def S_inv(self):
        return np.linalg.inv(self.S)

    def reconstruct(self):
        return self.S @ (self.D + self.B) @ self.S_inv


def as_flow_matrix(A):
    """Validate and return ``A`` as a float 3x3 trace-free array."""
    A = np.array(A, dtype=float)
    if A.shape != (3, 3):
        raise InvalidFlowError(f"flow matrix must be 3x3, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidFlowError("flow matrix has non-finite entries")
    norm = np.linalg.norm(A)
    if abs(np.trace(A)) > 1e-12 * norm:
        raise InvalidFlowError(
            f"flow matrix is not trace-free (trace {np.trace(A):.3e}, |A| {norm:.3e})")
    return A


def preset_flows(kind, eps, r=None):
    """Velocity gradient for one of the standard flows.

    ``eps`` is the largest-magnitude diagonal rate for PEF/USF/BSF, the shear
    rate for SHEAR and the in-plane stretch for MIXED (whose rotation rate is
    ``r``).
    """
    kind = FlowKind(kind)
    eps = float(eps)
    if kind is FlowKind.MIXED:
        if r is None:
            raise InvalidParameterError("mixed flow requires a rotation rate r")
        return np.array([[eps, -float(r), 0.0],
                         [float(r), eps, 0.0],
                         [0.0, 0.0, -2.0 * eps]])
    if not eps > 0.0:
        raise InvalidParameterError(f"{kind.value} rate must be positive, got {eps}")
    if kind is FlowKind.PEF:
        return np.diag([eps, -eps, 0.0])
    if kind is FlowKind.USF:
        return np.diag([eps, -eps / 2.0, -eps / 2.0])
    if kind is FlowKind.BSF:
        return np.diag([-eps, eps / 2.0, eps / 2.0])
    A = np.zeros((3, 3))
    A[0, 1] = eps
    return A


# -- eigen machinery ---------------------------------------------------------

def _char_coeffs(A):
    # depressed characteristic polynomial lam^3 + p lam + q of a trace-free A
    p = (A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
         + A[0, 0] * A[2, 2] - A[0, 2] * A[2, 0]
         + A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
    q = -np.linalg.det(A)
    return float(p), float(q)


def _polish(lam, p, q):
    d = 3.0 * lam * lam + p
    if d == 0.0:
        return lam
    return lam - (lam ** 3 + p * lam + q) / d


def _null_vector(M):
    _, _, vh = np.linalg.svd(M)
    return vh[-1].conj()


def _sign_fix(v):
    k = int(np.argmax(np.abs(v)))
    return -v if np.real(v[k]) < 0 else v


def _unit(v):
    return v / np.linalg.norm(v)


def _axis_aligned_basis(Q):
    """Orthonormal basis of span(rows of Q) built from projected coordinate axes."""
    P = Q.T @ Q
    chosen, cols = [], []
    cand = [P[:, k].copy() for k in range(3)]
    for _ in range(Q.shape[0]):
        for c in cols:
            cand = [v - (c @ v) * c for v in cand]
        norms = [np.linalg.norm(v) if k not in chosen else -1.0 for k, v in enumerate(cand)]
        k = int(np.argmax(norms))
        chosen.append(k)
        cols.append(cand[k] / norms[k])
    order = np.argsort(chosen)
    return [cols[i] for i in order]


def _plane_axes(rows):
    q, _ = np.linalg.qr(rows.T)
    P = q @ q.T
    first = int(np.argmax(np.diag(P)))
    rest = [k for k in range(3) if k != first]
    resid = [P[k, k] - P[first, k] ** 2 / P[first, first] for k in rest]
    second = rest[int(np.argmax(resid))]
    return tuple(sorted((first, second)))


def _rank(M, scale):
    sv = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(sv > _RANK_TOL * scale))


def classify_flow(A, tol=DEFAULT_TOL):
    """Real Jordan decomposition ``A = S (D + B) S^-1`` with its class tag.

    Eigenvalues come from the closed-form cubic (one Newton polish per root);
    eigenvectors from explicit null spaces.  Real eigenvalues are ordered by
    decreasing value, a complex pair always occupies the leading 2x2 block with
    ``B = [[0, -r], [r, 0]]``, ``r > 0``.
    """
    if not (0.0 < tol <= 1e-4):
        raise InvalidParameterError(f"tol must lie in (0, 1e-4], got {tol}")
    A = as_flow_matrix(A)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        eye = np.eye(3)
        return FlowDecomposition(FlowClass.ZERO, A, eye, np.zeros((3, 3)), np.zeros((3, 3)))

    An = A / scale
    p, q = _char_coeffs(An)
    disc = -4.0 * p ** 3 - 27.0 * q ** 2
    disc_tol = max(tol * tol, 64.0 * _EPS)

    if abs(p) <= math.sqrt(disc_tol) and abs(q) <= disc_tol:
        dec = _nilpotent(A, An)
    elif abs(disc) <= disc_tol:
        lam = -1.5 * q / p
        dec = _double_root(A, An, lam, -2.0 * lam)
    elif disc > 0.0:
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = min(1.0, max(-1.0, 3.0 * q / (p * m)))
        phi = math.acos(arg) / 3.0
        roots = [_polish(m * math.cos(phi - 2.0 * math.pi * k / 3.0), p, q) for k in range(3)]
        roots.sort(reverse=True)
        if min(roots[0] - roots[1], roots[1] - roots[2]) <= tol:
            if roots[0] - roots[1] <= tol:
                lam = 0.5 * (roots[0] + roots[1])
            else:
                lam = 0.5 * (roots[1] + roots[2])
            dec = _double_root(A, An, lam, -2.0 * lam)
        else:
            dec = _distinct_real(A, An, roots)
    else:
        root = math.sqrt(q * q / 4.0 + p ** 3 / 27.0)
        lr = np.cbrt(-q / 2.0 + root) + np.cbrt(-q / 2.0 - root)
        lr = _polish(float(lr), p, q)
        im2 = 0.75 * lr * lr + p
        if im2 <= tol * tol:
            dec = _double_root(A, An, -0.5 * lr, lr)
        else:
            dec = _complex_pair(A, An, -0.5 * lr, math.sqrt(im2), lr)

    resid = np.linalg.norm(A @ dec.S - dec.S @ (dec.D + dec.B))
    if not np.isfinite(resid) or resid > 1e-6 * scale:
        raise NumericError(
            f"Jordan decomposition failed to converge for A={A.tolist()!r} "
            f"(residual {resid:.3e})")
    return dec


def _distinct_real(A, An, roots):
    scale = np.linalg.norm(A)
    cols = [_sign_fix(_unit(np.real(_null_vector(An - lam * np.eye(3))))) for lam in roots]
    S = np.column_stack(cols)
    D = np.diag([lam * scale for lam in roots])
    return FlowDecomposition(FlowClass.NONDEFECTIVE_REAL, A, S, D, np.zeros((3, 3)))


def _double_root(A, An, lam, mu):
    scale = np.linalg.norm(A)
    N = An - lam * np.eye(3)
    u = _sign_fix(_unit(np.real(_null_vector(An - mu * np.eye(3)))))
    if _rank(N, 1.0) <= 1:
        _, _, vh = np.linalg.svd(N)
        pair = [_sign_fix(v) for v in _axis_aligned_basis(vh[1:])]
        if lam >= mu:
            S = np.column_stack(pair + [u])
            d = [lam, lam, mu]
        else:
            S = np.column_stack([u] + pair)
            d = [mu, lam, lam]
        D = np.diag(np.array(d) * scale)
        return FlowDecomposition(FlowClass.NONDEFECTIVE_REAL, A, S, D, np.zeros((3, 3)))

    # defective: chain (N w, w) spanning the generalized eigenspace
    _, _, vh = np.linalg.svd(N @ N)
    gen = vh[1:]
    w = max(gen, key=lambda v: np.linalg.norm(N @ v))
    w = _unit(w)
    x = N @ w
    if np.real(x[int(np.argmax(np.abs(x)))]) < 0:
        w = -w
        x = -x
    S = np.column_stack([x, w, u])
    D = np.diag(np.array([lam, lam, mu]) * scale)
    B = np.zeros((3, 3))
    B[0, 1] = 1.0
    # S was built from A/|A|; rescale the chain so that the nilpotent part is exactly E12
    S[:, 0] *= scale
    return FlowDecomposition(FlowClass.DEFECTIVE_MIXED, A, S, D, B)


def _nilpotent(A, An):
    # the rate nu sits in B = nu * J so that the chain columns stay balanced
    rank = _rank(An, 1.0)
    B = np.zeros((3, 3))
    if rank >= 2:
        _, _, vh = np.linalg.svd(A @ A)
        w = vh[0]
        x2, x1 = A @ A @ w, A @ w
        if x2[int(np.argmax(np.abs(x2)))] < 0:
            w, x1, x2 = -w, -x1, -x2
        nu = math.sqrt(np.linalg.norm(x2))
        S = np.column_stack([x2 / nu ** 2, x1 / nu, w])
        B[0, 1] = B[1, 2] = nu
    else:
        _, _, vh = np.linalg.svd(A)
        w = vh[0]
        x = A @ w
        if x[int(np.argmax(np.abs(x)))] < 0:
            w, x = -w, -x
        # kernel of A is 2-dimensional and contains A w; complete it orthogonally
        kern = vh[1:]
        xu = _unit(x)
        cand = [k - (xu @ k) * xu for k in kern]
        u = _sign_fix(_unit(max(cand, key=np.linalg.norm)))
        S = np.column_stack([xu, w, u])
        B[0, 1] = np.linalg.norm(x)
    return FlowDecomposition(FlowClass.DEFECTIVE_NILPOTENT, A, S, np.zeros((3, 3)), B)


def _complex_pair(A, An, eps, r, lr):
    scale = np.linalg.norm(A)
    z = _null_vector(An - complex(eps, r) * np.eye(3))
    # rotate the phase so that real and imaginary parts are orthogonal
    z = z * np.exp(-0.5j * np.angle(z @ z))
    x, y = np.real(z), np.imag(z)
    c1, c2 = y, x
    norm = np.linalg.norm(c1)
    c1, c2 = c1 / norm, c2 / norm
    # quarter-turn phase freedom: pick the variant best aligned with the
    # coordinate axes closest to the rotation plane
    a_ax, b_ax = _plane_axes(np.vstack([c1, c2]))
    variants = [(c1, c2), (c2, -c1), (-c1, -c2), (-c2, c1)]
    c1, c2 = max(variants, key=lambda v: v[0][a_ax] + v[1][b_ax])
    u = _sign_fix(_unit(np.real(_null_vector(An - lr * np.eye(3)))))
    S = np.column_stack([c1, c2, u])
    D = np.diag(np.array([eps, eps, lr]) * scale)
    B = np.zeros((3, 3))
    B[0, 1] = -r * scale
    B[1, 0] = r * scale
    return FlowDecomposition(FlowClass.COMPLEX_PAIR, A, S, D, B)


# -- exponentials ------------------------------------------------------------

def _rotation_block(angle):
    c, s = math.cos(angle), math.sin(angle)
    R = np.eye(3)
    R[0, 0] = R[1, 1] = c
    R[0, 1] = -s
    R[1, 0] = s
    return R


def jordan_exponential(dec, t):
    """``e^{(D + B) t}`` in the Jordan basis."""
    if dec.kind is FlowClass.DEFECTIVE_MIXED:
        raise UnsupportedFlowError(
            "defective flow with nonzero stretch (J3, eps != 0) has no bounded-box scheme")
    if dec.kind is FlowClass.ZERO:
        return np.eye(3)
    if dec.kind is FlowClass.DEFECTIVE_NILPOTENT:
        B = dec.B
        return np.eye(3) + B * t + (B @ B) * (t * t / 2.0)
    E = np.diag(np.exp(np.diag(dec.D) * t))
    if dec.kind is FlowClass.COMPLEX_PAIR:
        return _rotation_block(dec.r * t) @ E
    return E


def flow_exponential(dec, t):
    """``e^{A t}`` assembled from the decomposition (no general expm)."""
    if dec.kind is FlowClass.ZERO:
        return np.eye(3)
    return dec.S @ jordan_exponential(dec, t) @ dec.S_inv


def flow_integral(dec, h):
    """``int_0^h e^{A s} ds``, the streaming propagator for constant peculiar velocity."""
    if dec.kind is FlowClass.DEFECTIVE_MIXED:
        raise UnsupportedFlowError(
            "defective flow with nonzero stretch (J3, eps != 0) has no bounded-box scheme")
    if dec.kind is FlowClass.ZERO:
        return h * np.eye(3)
    if dec.kind is FlowClass.DEFECTIVE_NILPOTENT:
        B = dec.B
        J = h * np.eye(3) + B * (h * h / 2.0) + (B @ B) * (h ** 3 / 6.0)
    else:
        d = np.diag(dec.D)
        J = np.diag([math.expm1(x * h) / x if x != 0.0 else h for x in d])
        if dec.kind is FlowClass.COMPLEX_PAIR:
            z = complex(d[0], dec.r)
            w = (np.exp(z * h) - 1.0) / z if z != 0 else complex(h, 0.0)
            J[0, 0] = J[1, 1] = w.real
            J[0, 1] = -w.imag
            J[1, 0] = w.imag
    return dec.S @ J @ dec.S_inv
