"""Polar bird's-eye-view 3D detection: geometry, attention kernels and a desk-scale pipeline."""

__version__ = "0.1.0"
