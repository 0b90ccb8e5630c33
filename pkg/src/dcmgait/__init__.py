"""DCM walking-pattern generation, full-model gait costs and evolutionary tuning."""

__version__ = "0.1.0"
