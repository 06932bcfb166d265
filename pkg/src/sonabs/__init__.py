"""Workbench for in-situ sound absorption of finite porous samples.

Simulates two-microphone measurements above baffled rectangular absorbers
with a collocation BEM, synthesizes labeled datasets, and trains a 1D
residual convolutional network that maps the inter-microphone transfer
function to the infinite-sample angle-dependent absorption coefficient.
"""

__version__ = "0.1.0"

from sonabs.types import (
    AirProperties,
    FrequencyGrid,
    MaterialParams,
    ScenarioGeometry,
    TransferSpectrum,
)

__all__ = [
    "AirProperties",
    "FrequencyGrid",
    "MaterialParams",
    "ScenarioGeometry",
    "TransferSpectrum",
    "__version__",
]
