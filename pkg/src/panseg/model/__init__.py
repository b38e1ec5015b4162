from .backbone import ConvBackbone, FeaturePyramid, normalize_image, pad_to_multiple
from .merge import FeatureMerge
from .head import PanopticHead
from .detector import AnchorDetector, OracleDetector, generate_anchors
from .network import PanopticNet

__all__ = [
    "ConvBackbone",
    "FeaturePyramid",
    "FeatureMerge",
    "PanopticHead",
    "AnchorDetector",
    "OracleDetector",
    "PanopticNet",
    "generate_anchors",
    "normalize_image",
    "pad_to_multiple",
]
