"""WCA interactions and isokinetic SLLOD dynamics in a deforming periodic cell.

Particles carry positions ``q`` and peculiar momenta ``p = v - A q`` (unit
mass).  In these variables the SLLOD equations read

    dq/dt = p + A q,    dp/dt = f - A p - alpha p,

with ``alpha = (f - A p) . p / p . p`` keeping ``|p|^2`` constant.  The
integrator is a kick-drift-kick splitting whose drift solves the streaming
part exactly, ``q <- e^{A dt} q + (int_0^dt e^{A s} ds) p``, so a particle and
its lattice image (which moves with ``e^{A t}``) stay images of each other to
round-off, whatever basis the cell is stored in.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .boxmotion import advance_box, default_automorphisms, init_box, min_replica_distance, naive_box
from .errors import (ConfigError, DegenerateStateError, InvalidParameterError, OverlapError,
                     SimulationAbort)
from .flowdecomp import FlowKind, classify_flow, flow_exponential, flow_integral, preset_flows
from .pbc import ReducedCell, check_cutoff, neighbor_pairs, wrap_positions

WCA_CUTOFF = 2.0 ** (1.0 / 6.0)
EXPLOSION_SPEED = 1e3


@dataclass
class ParticleSystem:
    """Particle state; ``p`` is the peculiar momentum ``v - A q`` (unit mass)."""

    q: np.ndarray
    p: np.ndarray
    f: np.ndarray
    A: np.ndarray
    energy: float = 0.0
    virial: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    @property
    def N(self):
        return self.q.shape[0]

    @property
    def v(self):
        return self.p + self.q @ self.A.T

    def copy(self):
        return ParticleSystem(self.q.copy(), self.p.copy(), self.f.copy(), self.A.copy(),
                              self.energy, self.virial.copy())


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one simulation.  Defaults follow the standard WCA protocol."""

    N: int = 512
    T: float = 0.722
    rho: float = 0.8442
    dt: float = 0.002
    t_max: float = 20.0
    t_decorrelate: float = 2.0
    seed: int = 1
    kind: str = "pef"
    rate: float = 1.0
    rot_rate: float = 0.0
    realizations: int = 10
    sample_every: int = 10
    box: str = "auto"

    def validate(self):
        if not isinstance(self.N, (int, np.integer)) or self.N <= 1:
            raise ConfigError(f"N: need an integer > 1, got {self.N!r}")
        if not self.rho > 0:
            raise ConfigError(f"rho: must be positive, got {self.rho!r}")
        if not self.T > 0:
            raise ConfigError(f"T: must be positive, got {self.T!r}")
        if not self.dt > 0:
            raise ConfigError(f"dt: must be positive, got {self.dt!r}")
        if not self.t_max > 0:
            raise ConfigError(f"t_max: must be positive, got {self.t_max!r}")
        if not 0 <= self.t_decorrelate < self.t_max:
            raise ConfigError(
                f"t_decorrelate: must lie in [0, t_max), got {self.t_decorrelate!r} with t_max {self.t_max!r}")
        if self.sample_every < 1:
            raise ConfigError(f"sample_every: must be >= 1, got {self.sample_every!r}")
        if self.realizations < 1:
            raise ConfigError(f"realizations: must be >= 1, got {self.realizations!r}")
        if self.box not in ("auto", "naive"):
            raise ConfigError(f"box: expected auto or naive, got {self.box!r}")
        try:
            self.flow_matrix()
        except (ValueError, InvalidParameterError) as exc:
            raise ConfigError(f"kind/rate: {exc}") from exc
        return self

    @property
    def a(self):
        return (self.N / self.rho) ** (1.0 / 3.0)

    def flow_matrix(self):
        if self.kind == "eq":
            return np.zeros((3, 3))
        kind = FlowKind(self.kind)
        return preset_flows(kind, self.rate, self.rot_rate if kind is FlowKind.MIXED else None)


# -- potential and forces -------------------------------------------------------

def wca_energy_force(r):
    """WCA energy ``phi(r)`` and derivative ``dphi/dr``; both vanish beyond ``2^(1/6)``."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise OverlapError(-1, -1)
    inside = r <= WCA_CUTOFF
    rr = np.where(inside, r, 1.0)
    i6 = rr ** -6
    phi = np.where(inside, 4.0 * (i6 * i6 - i6) + 1.0, 0.0)
    dphi = np.where(inside, (-48.0 * i6 * i6 + 24.0 * i6) / rr, 0.0)
    if phi.ndim == 0:
        return float(phi), float(dphi)
    return phi, dphi


@njit(cache=True)
def _pair_forces(n, ii, jj, dd, rc2):
    f = np.zeros((n, 3))
    vir = np.zeros((3, 3))
    energy = 0.0
    for k in range(ii.shape[0]):
        d0, d1, d2 = dd[k, 0], dd[k, 1], dd[k, 2]
        r2 = d0 * d0 + d1 * d1 + d2 * d2
        if r2 == 0.0:
            return f, energy, vir, k
        if r2 > rc2:
            continue
        i2 = 1.0 / r2
        i6 = i2 * i2 * i2
        energy += 4.0 * (i6 * i6 - i6) + 1.0
        # -phi'(r) / r
        s = (48.0 * i6 * i6 - 24.0 * i6) * i2
        g0, g1, g2 = s * d0, s * d1, s * d2
        i, j = ii[k], jj[k]
        f[i, 0] += g0
        f[i, 1] += g1
        f[i, 2] += g2
        f[j, 0] -= g0
        f[j, 1] -= g1
        f[j, 2] -= g2
        vir[0, 0] += d0 * g0
        vir[0, 1] += d0 * g1
        vir[0, 2] += d0 * g2
        vir[1, 0] += d1 * g0
        vir[1, 1] += d1 * g1
        vir[1, 2] += d1 * g2
        vir[2, 0] += d2 * g0
        vir[2, 1] += d2 * g1
        vir[2, 2] += d2 * g2
    return f, energy, vir, -1


def compute_forces(q, cell, r_cut=WCA_CUTOFF):
    """WCA forces, potential energy and pair virial ``sum_pairs dq (x) f_ij``.

    Pairs come from :func:`neighbor_pairs` in canonical ``(i, j)`` order and
    are accumulated sequentially, so the result is deterministic.
    """
    q = np.ascontiguousarray(q, dtype=float)
    ii, jj, dd = neighbor_pairs(q, cell, r_cut)
    f, energy, vir, bad = _pair_forces(q.shape[0], ii, jj, dd, r_cut * r_cut)
    if bad >= 0:
        raise OverlapError(int(ii[bad]), int(jj[bad]))
    return f, float(energy), vir


# -- thermostat ------------------------------------------------------------------

def sllod_alpha(q, v, f, A):
    """Isokinetic multiplier ``(f - A v + A A q) . (v - A q) / |v - A q|^2``."""
    q, v, f, A = (np.asarray(x, dtype=float) for x in (q, v, f, A))
    c = v - q @ A.T
    den = float(np.sum(c * c))
    if den < 1e-12:
        raise DegenerateStateError(f"peculiar kinetic energy {0.5 * den:.3e} is too small")
    num = float(np.sum((f - v @ A.T + q @ (A @ A).T) * c))
    return num / den


def kinetic_temperature(p):
    """Peculiar temperature with ``3N - 3`` degrees of freedom."""
    n = p.shape[0]
    return float(np.sum(p * p)) / (3 * n - 3)


def _alpha_p(p, f, A):
    den = float(np.sum(p * p))
    if den < 1e-12:
        raise DegenerateStateError(f"peculiar kinetic energy {0.5 * den:.3e} is too small")
    return float(np.sum((f - p @ A.T) * p)) / den


class SllodIntegrator:
    """Kick-drift-kick SLLOD integrator with exact isokinetic projection.

    Parameters
    ----------
    dec : FlowDecomposition
        Decomposed velocity gradient.
    dt : float
        Time step.
    T : float or None
        Target peculiar temperature (``3N - 3`` degrees of freedom).  ``None``
        runs plain SLLOD without the thermostat.
    r_cut : float
        Interaction cutoff.
    """

    name = "sllod-kdk-exact-streaming"

    def __init__(self, dec, dt, T, r_cut=WCA_CUTOFF):
        if not dt > 0:
            raise InvalidParameterError(f"dt must be positive, got {dt}")
        self.dec = dec
        self.A = np.array(dec.A, dtype=float)
        self.dt = float(dt)
        self.T = None if T is None else float(T)
        self.r_cut = r_cut
        self.E = flow_exponential(dec, dt)
        self.Phi = flow_integral(dec, dt)
        self.step_count = 0

    def _kick(self, sys):
        h = 0.5 * self.dt
        alpha = _alpha_p(sys.p, sys.f, self.A) if self.T is not None else 0.0
        sys.p = sys.p + h * (sys.f - sys.p @ self.A.T - alpha * sys.p)
        self._project(sys)

    def _project(self, sys):
        if self.T is None:
            return
        target = self.T * (3 * sys.N - 3)
        cur = float(np.sum(sys.p * sys.p))
        if cur < 1e-12:
            raise DegenerateStateError(f"peculiar kinetic energy {0.5 * cur:.3e} is too small")
        sys.p = sys.p * math.sqrt(target / cur)

    def refresh_forces(self, sys, box):
        sys.f, sys.energy, sys.virial = compute_forces(sys.q, ReducedCell(box.cell), self.r_cut)

    def step(self, sys, box):
        """Advance particles and box by one step; returns the new box state."""
        self.step_count += 1
        self._kick(sys)
        q = sys.q @ self.E.T + sys.p @ self.Phi.T
        box = advance_box(box, self.dt)
        sys.q = wrap_positions(q, box.cell)
        try:
            self.refresh_forces(sys, box)
        except OverlapError as exc:
            raise SimulationAbort(self.step_count, str(exc)) from exc
        self._kick(sys)
        speed = np.sqrt(np.max(np.sum(sys.v ** 2, axis=1)))
        if not np.isfinite(speed) or speed > EXPLOSION_SPEED:
            raise SimulationAbort(self.step_count,
                                  f"particle speed {speed:.3e} exceeds {EXPLOSION_SPEED:g}; "
                                  f"t = {box.t:.6g}")
        return box


def step(sys, box, dt, integrator=None):
    """One step of the coupled particle/box system (functional form).

    ``sys`` is not modified; a new system and box are returned.
    """
    if integrator is None:
        T = kinetic_temperature(sys.p) if sys.N > 1 else None
        integrator = SllodIntegrator(box.frame.dec, dt, T)
    new = sys.copy()
    new_box = integrator.step(new, box)
    return new, new_box


def lattice_fractions(N):
    """Fractional coordinates of the first ``N`` sites of an ``n^3`` simple cubic lattice."""
    n = 1
    while n ** 3 < N:
        n += 1
    idx = np.array([(i, j, k) for i in range(n) for j in range(n) for k in range(n)][:N], dtype=float)
    return (idx + 0.5) / n


def initialize(config, basis=None):
    """Lattice start with seeded Gaussian peculiar momenta at exactly temperature ``T``.

    Returns ``(sys, box, integrator)``.
    """
    config.validate()
    if basis is None:
        basis = default_automorphisms()
    dec = classify_flow(config.flow_matrix())
    a = config.a
    box = naive_box(dec, basis, a) if config.box == "naive" else init_box(dec, basis, a)
    check_cutoff(WCA_CUTOFF, min_replica_distance(dec, basis, a))
    q = lattice_fractions(config.N) @ box.cell.T
    rng = np.random.default_rng(config.seed)
    p = rng.standard_normal((config.N, 3))
    p -= p.mean(axis=0)
    A = np.array(dec.A, dtype=float)
    sys = ParticleSystem(q, p, np.zeros_like(q), A)
    integ = SllodIntegrator(dec, config.dt, config.T)
    integ._project(sys)
    integ.refresh_forces(sys, box)
    return sys, box, integ
