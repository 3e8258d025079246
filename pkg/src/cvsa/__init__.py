"""Cross-view saliency alignment for self-supervised pretraining, at desk scale."""

__version__ = "0.1.0"
