"""Egocentric hand detection: skin blobs to hand proposals to scored boxes."""

from .classifier import Detection, HandClassifier, hog_descriptor, non_max_suppression, score_proposal, train_baseline
from .evaluation import average_precision, evaluate_detections, frame_presence_metrics, iou, match_detections, precision_recall_curve
from .geometry import Line2D, OrientedRect, fit_line_tls, kmeans_lines, min_area_rect
from .proposals import HandProposal, ProposalConfig, generate_proposals, is_two_arm_region, split_two_arm_blob, wrist_cut_proposals
from .raster import Blob, connected_components, distance_transform, watershed_split
from .skin import FeatureConfig, SkinModel, extract_pixel_features, predict_skin_map, threshold_and_clean, train_skin_model

__version__ = "0.1.0"
