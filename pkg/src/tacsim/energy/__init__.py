from .barrier import ActivePairs, active_pairs, barrier_energy, barrier_value
from .constraints import PinConstraints, augmented_lagrangian_energy
from .elastic import elastic_energy
from .friction import FrictionLag, friction_energy, friction_f0, friction_f1, update_friction_lag
from .inertia import compute_xhat, inertia_energy
from .params import GEL, ContactParams, MaterialParams

__all__ = [
    "ActivePairs", "ContactParams", "FrictionLag", "GEL", "MaterialParams", "PinConstraints",
    "active_pairs", "augmented_lagrangian_energy", "barrier_energy", "barrier_value",
    "compute_xhat", "elastic_energy", "friction_energy", "friction_f0", "friction_f1",
    "inertia_energy", "update_friction_lag",
]
