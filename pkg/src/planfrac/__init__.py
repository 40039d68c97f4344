"""planfrac: planar hydraulic-fracture propagation simulator."""

__version__ = "0.1.0"
