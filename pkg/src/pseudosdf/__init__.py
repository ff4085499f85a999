"""Meshing unsigned distance fields through learned per-cell pseudo-signs.

A small MLP maps each grid cell's 8 corner distances and gradients to one of
128 corner-sign configurations; marching cubes or dual contouring then
triangulate those local pseudo-SDFs, which works on open and closed surfaces
alike.
"""

from .dataset import (
    CellDataset,
    GridCellSample,
    NoiseSpec,
    TrainingExample,
    augment,
    augment_batch,
    class_weights,
    extract_cells,
    load_dataset,
    save_dataset,
)
from .fields import (
    AnalyticField,
    Box,
    FieldGrid,
    GridSpec,
    NeuralNoiseSpec,
    OpenDisc,
    PlanePatch,
    Sphere,
    ThinSlab,
    Torus,
    builtin_corpus,
    load_field,
    perturb_field,
    sample_analytic,
    sample_mesh_udf,
    save_field,
)
from .geometry import (
    Bvh,
    ClosestPointResult,
    TriangleMesh,
    build_bvh,
    closest_point,
    load_obj,
    normalize_to_unit_volume,
    save_obj,
    winding_number,
)
from .metrics import (
    MetricReport,
    PointSample,
    chamfer,
    image_consistency,
    render_normal_map,
    sample_surface,
)
from .nnet import (
    MlpModel,
    TrainConfig,
    TrainReport,
    forward,
    init_model,
    load_model,
    loss_and_grads,
    predict_config,
    save_model,
    train,
)
from .signconfig import decode, edge_flips, encode, from_multilabel, to_multilabel
from .triangulate import (
    PseudoSdfCell,
    QefProblem,
    dc_extract,
    mc_cell,
    mc_extract,
    mc_extract_sdf,
    qef_solve,
)

__version__ = "0.1.0"
