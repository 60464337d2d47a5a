"""Population-based training with trust-region Bayesian optimization and generational architecture search."""

__version__ = "0.1.0"
