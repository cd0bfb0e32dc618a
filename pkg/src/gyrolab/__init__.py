"""gyrolab: 2D magnetic Hartree dynamics in the Landau basis, vortex
coherent-state Husimi reductions, and the limiting gyrokinetic drift flow,
with Wasserstein/residual agreement metrics across a field sweep."""

__version__ = "0.1.0"
