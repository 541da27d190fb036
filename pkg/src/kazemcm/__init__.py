"""Keypoint extraction, overlap metrics, BoVW fusion, and MCM/SVM
classification benchmarks."""

__version__ = "0.1.0"
