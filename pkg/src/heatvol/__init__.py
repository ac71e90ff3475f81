"""Skeleton sequences to 3D heatmap volumes, plus a 3D-CNN toolkit to consume them."""

from .errors import (
    AnnotationParseError,
    DivergenceError,
    EmptySubjectError,
    HeatvolError,
    SchemaError,
    ShapeError,
    SpecError,
    UsageError,
)
from .heatmap import (
    GaussianConfig,
    HeatmapVolume,
    build_volume,
    joint_map,
    limb_map,
    load_volume,
    point_segment_distance,
    render_slice,
    save_volume,
)
from .pipeline import PipelineConfig, make_volume
from .preprocess import (
    CropBox,
    SamplerSpec,
    crop_resize,
    drop_limb_keypoints,
    fixed_stride_sample,
    tight_bbox,
    uniform_sample,
)
from .rng import make_rng
from .skeleton import (
    Keypoint,
    PoseFrame,
    SkeletonLayout,
    SkeletonSequence,
    coco17_layout,
    load_annotations,
    save_annotations,
)

__version__ = "0.1.0"
