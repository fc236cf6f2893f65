"""
curvgap: curvature hierarchy on coordinate-chart manifolds and numerical
checks of rigidity and gap theorems for Bach-flat metrics.
"""

from .catalog import build_catalog_entry, load_manifest, resolve
from .geometry import CurvatureJets, MetricField
from .quadrature import GridSpec
from .verify import Verdict, gap_constants, run_checks

__version__ = "0.1.0"

__all__ = [
    "CurvatureJets",
    "GridSpec",
    "MetricField",
    "Verdict",
    "build_catalog_entry",
    "gap_constants",
    "load_manifest",
    "resolve",
    "run_checks",
]
