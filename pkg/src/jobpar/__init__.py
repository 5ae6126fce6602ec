"""Simulation and mean-field analysis of d-parallel processor-sharing servers."""
