"""Meta-learned multi-objective RL toolkit for home appliance scheduling."""

__version__ = "0.1.0"
