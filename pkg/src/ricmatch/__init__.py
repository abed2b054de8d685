"""Choose-vs-hoard data matching for RAN intelligent-controller model instances."""

__version__ = "0.1.0"
