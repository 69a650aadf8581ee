"""Sideband-engineered spin models: drive synthesis, sector Hamiltonians,
Floquet analysis, Trotterized evolution, band topology and XXZ phase scans."""

__version__ = "0.1.0"
