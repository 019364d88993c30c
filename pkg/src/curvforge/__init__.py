"""Curvature synthesis for metrics adapted to a distribution on tori and annuli."""

__version__ = "0.1.0"

from .lattice import Grid, make_annulus, make_torus  # noqa: E402
from .geometry import Distribution, MetricField, flat_metric, scal_oracle  # noqa: E402
from .presets import perturbed_metric, preset_distribution  # noqa: E402

__all__ = [
    "__version__",
    "Grid",
    "make_torus",
    "make_annulus",
    "MetricField",
    "Distribution",
    "flat_metric",
    "scal_oracle",
    "perturbed_metric",
    "preset_distribution",
]
