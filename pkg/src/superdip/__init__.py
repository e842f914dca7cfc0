"""Superdirective endfire arrays of lossy finite-length dipoles.

The package models mutually coupled dipole arrays under the sinusoidal
current distribution, computes rate-optimal excitations and matched loads
under a total power budget, and independently cross-checks array gains
with a thin-wire method-of-moments solver of the coupled Hallen integral
equations.
"""

__version__ = "0.1.0"
