"""Weakly-supervised 2D keypoint discovery.

Trains a network to discover semantically consistent keypoints from images
using only image-level class labels, by reconstructing a deformed target
image through a Gaussian keypoint bottleneck, pooling part features for a
weak classification task, and enforcing a viewpoint-based flip-equivariance
constraint on samples mined from the model's own predictions.
"""

__version__ = "0.1.0"

from .config import LossWeights, PROFILES, ScaleProfile, TrainConfig, make_preset

__all__ = [
    "LossWeights",
    "PROFILES",
    "ScaleProfile",
    "TrainConfig",
    "make_preset",
]
