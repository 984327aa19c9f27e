"""Prior-guided hyperparameter refinement and adaptation-pipeline planning."""

__version__ = "0.1.0"
