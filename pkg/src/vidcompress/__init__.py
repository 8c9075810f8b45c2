"""Desk-scale video dataset compression: learned keyframe selection plus latent synthesis."""

__version__ = "0.1.0"
