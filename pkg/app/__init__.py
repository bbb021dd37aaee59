"""FairDG Lab package: bounds, dependence estimators and fair domain generalization training."""

__version__: str = "0.1.0"
