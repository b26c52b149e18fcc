"""cadport: clustering + deep-RL multi-period portfolio research engine."""

__version__ = "0.1.0"
