"""Multi-view depth rendering, contrastive depth-encoder pre-training and few-shot heads on point clouds."""

__version__ = "0.1.0"
