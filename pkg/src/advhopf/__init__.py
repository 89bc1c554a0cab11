"""Delay-induced Hopf bifurcation of a nonlocal reaction-diffusion-advection population model."""

__version__ = "0.1.0"
