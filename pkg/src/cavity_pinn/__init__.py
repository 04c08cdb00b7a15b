"""Physics-informed neural network surrogates for lid-driven cavity flow."""

__version__ = "0.1.0"
