"""Hyperspectral anomalous change detection.

A siamese stop-gradient network (built on a small reverse-mode
differentiation engine), six covariance-based change detectors, synthetic
bi-temporal scenes, ENVI I/O and ROC/AUC evaluation.
"""

from .hsio import HsiCube, load_envi, save_envi, radiometric_align, extract_patches, export_map
from .scene import SceneSpec, generate_scene
from .evaluation import RocCurve, compute_roc, compute_auc, normalize_scores

__version__ = "0.1.0"

__all__ = [
    "HsiCube",
    "load_envi",
    "save_envi",
    "radiometric_align",
    "extract_patches",
    "export_map",
    "SceneSpec",
    "generate_scene",
    "RocCurve",
    "compute_roc",
    "compute_auc",
    "normalize_scores",
]
