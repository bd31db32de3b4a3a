"""Interactive multi-objective decision support with soft/hard bound learning."""

__version__ = "0.1.0"
