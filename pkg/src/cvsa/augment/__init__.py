"""SaliencySwap, photometric augmentation, RandomResizedCrop and synthetic data."""
from .config import AugConfig
from .photometric import apply_photometric, gaussian_blur, grayscale
from .swap import (
    SwapResult,
    ViewPair,
    fuse_cross_dataset,
    fuse_same_dataset,
    make_rrc_pair,
    make_view_pair,
    random_resized_crop,
    sample_patch_in_box,
    sample_rrc_box,
    saliency_swap,
    saliency_swap_detailed,
)
from .synth import SyntheticCorpus, generate_synthetic_corpus, write_corpus
