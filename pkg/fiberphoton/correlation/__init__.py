"""Time-tag cross-correlation."""
