"""Soft-robot neuroevolution workbench: voxel mass-spring physics, spiking controllers, CMA-ES."""

__version__ = "0.1.0"
