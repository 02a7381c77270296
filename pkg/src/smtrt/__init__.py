"""1D multigroup S_N thermal radiative transfer with gray second-moment acceleration."""

__version__ = "0.1.0"
