"""Single-body gauge protection for a U(1) quantum link model."""

__version__ = "0.1.0"
