"""voxelray: physics-informed voxel features and path-loss ground truth for
indoor radio scenes, at desk scale.

The pipeline: procedural scenes -> virtual depth/semantic scans ->
back-projected, fused point clouds -> voxel feature tensors (occupancy,
reflection dB, transmission dB, Tx distance) -> deterministic path-loss
heatmaps -> HDF5 datasets with rotational augmentation and scene-level splits.
"""

__version__ = "0.1.0"

from .errors import (
    DomainError,
    FormatError,
    GenerationError,
    RenderError,
    SamplingError,
    VoxelrayError,
)
from .materials import (
    DB_FLOOR,
    MaterialFeatures,
    MaterialKind,
    MaterialSpec,
    MaterialTable,
    default_table,
    eval_itu,
    fresnel_features,
    load_material_table,
)
from .sensing import (
    CameraIntrinsics,
    CameraPose,
    SemanticPointCloud,
    SensedFrame,
    back_project_frame,
    fuse,
    read_frames,
    to_world,
    write_frames,
)
from .scenegen import (
    Box,
    GenParams,
    ScanPlan,
    SceneDescription,
    SceneElement,
    gen_scene,
    make_scan_plan,
    render_views,
    scene_occupancy,
)
from .voxelizer import (
    FeatureTensor,
    FsplVolume,
    VoxelGrid,
    build_feature_tensor,
    fspl_db,
    fspl_volume,
    voxelize_cloud,
)
from .simulator import (
    PathLossStack,
    SimConfig,
    enumerate_reflections,
    fill_gaps,
    fill_stack,
    propagation_coefficients,
    simulate_volume,
    slice_heights,
    trace_direct,
    traverse_cells,
)
from .dataset import (
    DatasetSample,
    SplitManifest,
    read_sample,
    rotate_sample,
    sample_from_pipeline,
    sample_tx,
    split_scenes,
    write_sample,
)
from .evaluation import (
    EvalReport,
    material_reference_report,
    metrics,
    reconstruct,
)
