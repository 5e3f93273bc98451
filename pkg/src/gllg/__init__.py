"""Pseudospectral stochastic Landau-Lifshitz-Gilbert simulator on the 2D torus.

Two pathwise-equivalent solution routes are provided: direct Stratonovich
stepping of the spin field, and a rotating-frame route that integrates an
SO(3)-valued rotation field driven by the same noise and evolves the
transformed spin field under a gauged, noise-free equation.  Diagnostics
cover the energy processes, the smallness/horizon machinery and a
4*pi-quantised energy-concentration (bubbling) detector.
"""

__version__ = "0.1.0"
