"""Inter-model stages of a coarse-to-fine tumor segmentation cascade.

Post-processing of coarse predictions against a lung prior, ROI extraction and
paste-back, MC-dropout uncertainty and the uncertainty-weighted loss, and the
evaluation metrics used to compare pipeline variants.
"""

__version__ = "0.1.0"

from .volume import GridMeta, LabelMap, Mask, Volume, check_grid_compat, count_foreground  # noqa: E402
from .io import ALL, CaseReport, PipelineConfig, load_config, read_nifti, write_nifti, write_report  # noqa: E402
from .morphology import ComponentRecord, Verdict, dilate, label_components, threshold_probability  # noqa: E402
from .anatomy import (  # noqa: E402
    FilterDecision,
    Reason,
    ZoneBox,
    filter_components,
    mediastinal_zone,
    overlap_fraction,
    select_top_k,
    surface_distance_voxels,
)
from .roi import RoiBox, bounding_box, crop, expand_box, paste_back  # noqa: E402
from .uncertainty import LossResult, adaptive_loss, alpha_map, dice_ce_loss, variance_map  # noqa: E402
from .metrics import TrendReport, boundary_dice, component_trend, dice, hd95, pearson, spearman  # noqa: E402
