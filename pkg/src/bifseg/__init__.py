"""Interactive bounding-box binary segmentation with graph-cut label
refinement and image-specific fine-tuning of the classifier head."""

from .errors import BifsegError, DataError, NumericError, ScribbleConflictError
from .graphcut import EnergyConfig, energy, label_update, pairwise_potential, unary_from_probability
from .geodesic import DistanceMap, geodesic_distance, scribble_uncertainty
from .grid import (BoundingBox, Grid2D, LabelMap, ScribbleSet, crop_with_margin,
                   load_image, resize_labels_back, resize_to_min_side, save_image)
from .model import (FeatureCache, ModelConfig, SegmenterModel, TrainConfig,
                    backprop_head, forward, head_forward, init_model, load_model,
                    save_model, train, weighted_cross_entropy)
from .pipeline import (RefineConfig, Session, build_weight_map, final_labels,
                       init_segment, network_uncertainty, refine, session_diagnostics)
from .evaluate import AblationConfig, AblationReport, dice, robot_scribbles, run_ablation
from .synth import SyntheticSpec, generate_dataset, training_crops, write_dataset

__version__ = "0.1.0"
