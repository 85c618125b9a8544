"""Residual U-Net left-atrium segmentation with volumetric biomarkers."""
from ._kernels import available_backends, get_backend, set_backend
from .augmentation import AugmentSpec, SliceSample, augment_pipeline
from .errors import (
    ConfigError,
    DataError,
    GraphError,
    LandmarkError,
    NumericError,
    SeganetError,
    ShapeError,
    SliceSelectionError,
    UndefinedMetricError,
)
from .metrics import MetricsReport, compare_stacks, dice_coefficient, hausdorff_distance, median_contour_distance
from .model import ModelConfig, ModelParams, build_seganet, forward, segment_stack
from .phantom import PhantomSpec, generate_phantom
from .stacks import ImageStack, MaskStack
from .training import AdamState, LossTrace, TrainConfig, adam_step, dice_loss, train
from .volumetrics import (
    BiomarkerResult,
    CycleLandmarks,
    VolumeCurve,
    cohort_compare,
    ejection_fractions,
    find_landmarks,
    mask_volume,
    select_atrial_slices,
    volume_curve,
)

__version__ = "0.1.0"
