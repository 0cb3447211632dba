"""Compatible finite element solver for moist compressible flow in a vertical slice."""

__version__ = "0.1.0"
