"""Electrostatics of planar traps with recessed mirrors, pseudopotential and transport."""
