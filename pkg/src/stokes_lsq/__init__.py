"""Least-squares spectral element solver for Stokes flow with non-standard boundary conditions."""
