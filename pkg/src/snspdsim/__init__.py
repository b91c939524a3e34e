"""Electro-thermal simulation and counting statistics for nanowire single-photon detectors.

Subpackages:
    circuit    -- lumped bias-network model (RLC core, damping analysis, drive solver)
    thermal    -- 1-D hotspot model of the nanowire (temperature field + phase flags)
    engine     -- coupled electro-thermal simulations in gated / free-running mode
    clickstats -- click-train generation and statistical analysis
    rfcal      -- two-port microwave toolkit (Touchstone, ABCD, transconductance)
    cli        -- batch front-end emitting CSV artifacts
"""

from .errors import (
    ConfigError,
    DegenerateTopologyError,
    DomainError,
    NumericalInstabilityError,
    SingularNetworkError,
    TouchstoneError,
)

__all__ = [
    "ConfigError",
    "DegenerateTopologyError",
    "DomainError",
    "NumericalInstabilityError",
    "SingularNetworkError",
    "TouchstoneError",
]

__version__ = "0.1.0"
