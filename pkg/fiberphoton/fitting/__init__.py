"""Model registry and damped least-squares fitting."""
