"""Deforming-box molecular dynamics for arbitrary incompressible linear flows."""

__version__ = "0.1.0"

from .boxmotion import (AutomorphismBasis, BoxMode, BoxState, advance_box, classic_kr_period,  # noqa: E402
                        default_automorphisms, init_box, min_replica_distance, stretch_rates,
                        validate_automorphisms, verify_lattice_periodicity)
from .dynamics import ParticleSystem, SimConfig, SllodIntegrator, initialize, step  # noqa: E402
from .flowdecomp import (FlowClass, FlowDecomposition, FlowKind, classify_flow,  # noqa: E402
                         flow_exponential, preset_flows)
from .observables import generalized_viscosity, virial_stress, window_average  # noqa: E402
from .pbc import minimum_image, neighbor_pairs, wrap_positions  # noqa: E402
