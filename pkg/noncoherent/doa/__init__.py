"""noncoherent.doa: DOA estimation with non-coherent sub-arrays."""

__version__ = "0.1.0"
