"""IO utilities: tag files and tabular artifacts."""
