"""Simulation and certification toolkit for IFSs of circle homeomorphisms."""

from .certifier import (
    BasinData,
    Certificate,
    CertificatePair,
    certify_robust_minimality,
    check_certificate,
    find_universal_word,
    locate_basin,
    nested_limit,
    perturb_map,
    reverify_certificate,
    search_cover_words,
    verify_contraction,
    verify_global_cover,
)
from .circle_maps import (
    Arc,
    CirclePoint,
    Composition,
    Inverse,
    LiftMap,
    Power,
    Rotation,
    SinePerturbed,
    circle_distance,
    eval_map,
    find_fixed_points,
    inverse_eval,
    map_from_json,
    rotation_number,
)
from .ifs_core import (
    IFS,
    OrbitalBranch,
    branch_apply,
    hat_diameter_decay,
    minimality_estimate,
    random_orbit_density,
    semigroup_orbit,
)
from .periodic_points import (
    PeriodicPointRecord,
    density_sweep,
    find_contracted_fixed_arc,
    periodic_in_interval,
)
from .symbolic import (
    BernoulliModel,
    Cylinder,
    MarkovMinorizedModel,
    Word,
    cylinder_measure,
    is_prefix_dense,
    model_from_json,
    sample_sequence,
)
from .synchronization import (
    RepellerEstimate,
    SyncReport,
    antonov_classify,
    detect_repellers,
    hitting_tail_check,
    pair_distance_trajectory,
    sync_fraction,
)

__all__ = [
    "Arc",
    "BasinData",
    "BernoulliModel",
    "Certificate",
    "CertificatePair",
    "CirclePoint",
    "Composition",
    "Cylinder",
    "IFS",
    "Inverse",
    "LiftMap",
    "MarkovMinorizedModel",
    "OrbitalBranch",
    "PeriodicPointRecord",
    "Power",
    "RepellerEstimate",
    "Rotation",
    "SinePerturbed",
    "SyncReport",
    "Word",
    "antonov_classify",
    "branch_apply",
    "certify_robust_minimality",
    "check_certificate",
    "circle_distance",
    "cylinder_measure",
    "density_sweep",
    "detect_repellers",
    "eval_map",
    "find_contracted_fixed_arc",
    "find_fixed_points",
    "find_universal_word",
    "hat_diameter_decay",
    "hitting_tail_check",
    "inverse_eval",
    "is_prefix_dense",
    "locate_basin",
    "map_from_json",
    "minimality_estimate",
    "model_from_json",
    "nested_limit",
    "pair_distance_trajectory",
    "periodic_in_interval",
    "perturb_map",
    "random_orbit_density",
    "reverify_certificate",
    "rotation_number",
    "sample_sequence",
    "search_cover_words",
    "semigroup_orbit",
    "sync_fraction",
    "verify_contraction",
    "verify_global_cover",
]
