"""vcap: a simulated volumetric capture rig.

Simulated RGB-D eyes stream compressed frames through a small pub-sub
broker to an orchestrator that groups them, records them, and runs
marker-less extrinsic calibration against a known box structure.
"""

from .geometry import (
    DEFAULT_INTRINSICS,
    GeometryError,
    Intrinsics,
    NeighborIndex,
    PointCloud,
    Pose,
    backproject,
    nearest_neighbor_index,
    normals_from_depth,
    transform,
)
from .structure import BoxSpec, StructureModel, default_structure, load_structure, save_structure
from .render import RenderedView, RenderStats, render, render_pair
from .sampling import CylindricalSample, RigSensor, SamplingParams, UniformGrid, default_rig, load_rig, sample_rig, save_rig
from .noise import NoiseParams, corrupt
from .crf import CrfParams, crf_refine
from .labeling import (
    GridSearchConfig,
    GridSearchLabeler,
    Labeler,
    LabelerOutput,
    LossParams,
    OracleLabeler,
    label_views,
    loss_overall,
    miou,
    view_loss,
)
from .calibration import (
    CalibrationError,
    CalibrationResult,
    Correspondence,
    IcpOptions,
    calibrate,
    evaluate_rmse,
    extract_correspondences,
    graph_icp,
    procrustes,
)
from .reporting import load_result, result_from_dict, result_to_dict, rmse_table, save_result
from .dataset import DatasetError, DatasetGroup, generate_dataset, list_groups, load_group

__version__ = "0.1.0"
