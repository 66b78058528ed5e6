"""Memory-dependence prediction for an x86-64 subset: tracer, encoder, model."""

__version__ = "0.1.0"
