"""Particle-filtered obstacle estimation from depth images driving a potential-field controller."""

__version__ = "0.1.0"
