"""Width-aware topological energies for image segmentation.

Persistent homology of superlevel-set filtrations on pixel grids, smooth
morphology, the width-aware topological (WT) energy and its gradient, a
direct AdamW minimizer and a topology-constrained nonlocal soft threshold
dynamics (Topo-NLSTD) segmentation solver.
"""

__version__ = "0.1.0"

from ._validation import SimplexViolationError
from .grid import (
    FieldFormatError,
    NeighborhoodSpec,
    PixelIndex,
    load_field,
    neighborhood,
    project_simplex,
    save_field,
)
from .minimize import MinimizeResult, minimize_energy
from .morphology import (
    SmoothParams,
    dilate,
    erode,
    smooth_dilation,
    smooth_dilation_value,
    smooth_erosion,
    smooth_erosion_value,
    smooth_kernel,
)
from .nlstd import (
    MetricsReport,
    SolverConfig,
    WeightModel,
    dice_loss,
    metrics,
    run_topo_nlstd,
    topo_loss,
    unary_features,
)
from .optimizer import AdamWState, adamw_step
from .persistence import (
    PersistenceDiagram,
    PersistencePair,
    betti_at_threshold,
    compute_superlevel_persistence,
    critical_sets,
)
from .topo_energy import (
    FrozenCriticalSets,
    TopoParams,
    bar_energy,
    ph_energy,
    ph_gradient,
    surrogate_energy,
    surrogate_gradient,
    wt_energy,
)
from .estimators import TopoNLSTDSegmenter, WidthAwareTopoFilter

__all__ = [
    "AdamWState",
    "FieldFormatError",
    "FrozenCriticalSets",
    "MetricsReport",
    "MinimizeResult",
    "NeighborhoodSpec",
    "PersistenceDiagram",
    "PersistencePair",
    "PixelIndex",
    "SimplexViolationError",
    "SmoothParams",
    "SolverConfig",
    "TopoNLSTDSegmenter",
    "TopoParams",
    "WeightModel",
    "WidthAwareTopoFilter",
    "adamw_step",
    "bar_energy",
    "betti_at_threshold",
    "compute_superlevel_persistence",
    "critical_sets",
    "dice_loss",
    "dilate",
    "erode",
    "load_field",
    "metrics",
    "minimize_energy",
    "neighborhood",
    "ph_energy",
    "ph_gradient",
    "project_simplex",
    "run_topo_nlstd",
    "save_field",
    "smooth_dilation",
    "smooth_dilation_value",
    "smooth_erosion",
    "smooth_erosion_value",
    "smooth_kernel",
    "surrogate_energy",
    "surrogate_gradient",
    "topo_loss",
    "unary_features",
    "wt_energy",
]
