"""EIT tactile touchpad simulator.

Forward conduction model on a square sensing layer, adjacent-protocol
measurement simulation, adjoint sensitivity matrix, Tikhonov/L1
reconstruction, touch phantoms and metrics, and a touch-to-action event
engine, with a batch CLI and an interactive WebSocket service on top.
"""

from .forward import (
    MeasurementFrame,
    PotentialField,
    add_noise,
    assemble_system,
    simulate_frame,
    solve_drive,
)
from .hmi import (
    Action,
    ActionConfig,
    EventEngine,
    TouchEvent,
    TouchState,
    classify_frame,
    default_action_config,
    map_action,
)
from .inverse import (
    ReconstructionImage,
    ReconstructionParams,
    l1_reconstruct,
    postprocess,
    tikhonov_reconstruct,
)
from .mesh import (
    ConductivityField,
    Mesh,
    build_mesh,
    locate_element,
    uniform_field,
)
from .metrics import (
    BlobReport,
    SensitivityReport,
    detect_blobs,
    localization_error,
    mean_relative_change,
)
from .phantom import (
    LatticeSpec,
    TouchSpec,
    annulus,
    apply_lattice,
    apply_touches,
    disc,
    press_to_level,
)
from .protocol import Pattern, Protocol, generate_adjacent_protocol
from .sensitivity import SensitivityMatrix, compute_jacobian, predict_delta

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ActionConfig",
    "BlobReport",
    "ConductivityField",
    "EventEngine",
    "LatticeSpec",
    "MeasurementFrame",
    "Mesh",
    "Pattern",
    "PotentialField",
    "Protocol",
    "ReconstructionImage",
    "ReconstructionParams",
    "SensitivityMatrix",
    "SensitivityReport",
    "TouchEvent",
    "TouchSpec",
    "TouchState",
    "add_noise",
    "annulus",
    "apply_lattice",
    "apply_touches",
    "assemble_system",
    "build_mesh",
    "classify_frame",
    "compute_jacobian",
    "default_action_config",
    "detect_blobs",
    "disc",
    "l1_reconstruct",
    "locate_element",
    "localization_error",
    "map_action",
    "mean_relative_change",
    "postprocess",
    "predict_delta",
    "press_to_level",
    "simulate_frame",
    "solve_drive",
    "tikhonov_reconstruct",
    "uniform_field",
]
