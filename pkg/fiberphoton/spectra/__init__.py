"""Spectral bookkeeping for filter design and synthetic scans."""
