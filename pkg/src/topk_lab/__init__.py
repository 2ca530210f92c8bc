"""Top-k surrogate losses, regret-bound oracles and cardinality selection."""

__version__ = "0.1.0"
