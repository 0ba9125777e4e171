"""Safety filters that keep a system's whole spatial footprint inside a safe set."""

from . import dynamics, filters, geometry, polynomials, qp, sdp, sos

__all__ = ["dynamics", "filters", "geometry", "polynomials", "qp", "sdp", "sos"]
__version__ = "0.1.0"
