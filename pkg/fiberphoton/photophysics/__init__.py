"""Closed-form and Bloch-matrix photophysics of a driven two-level emitter."""
