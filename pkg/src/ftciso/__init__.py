"""Isotopy certificates for polygonal knots, links and spatial graphs."""
from .certify import IsotopyCertificate, certify_ftc, certify_thick, theta_of
from .graph_core import Arc, EmbeddedGraph, GraphError
from .metrics import discrete_thickness, measure_closeness

__version__ = "0.1.0"

__all__ = [
    "Arc",
    "EmbeddedGraph",
    "GraphError",
    "IsotopyCertificate",
    "certify_ftc",
    "certify_thick",
    "discrete_thickness",
    "measure_closeness",
    "theta_of",
]
