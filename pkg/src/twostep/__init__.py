"""Two gradient steps on the first layer of a two-layer network: simulation and theory."""

__version__ = "0.1.0"
