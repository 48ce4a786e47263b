"""loopwell: normal forms and spectral sweeps for wells on closed loops."""

__version__ = "0.1.0"
