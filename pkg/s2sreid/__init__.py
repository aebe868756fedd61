"""s2sreid - set-to-set deep metric learning for re-identification."""

__version__ = "0.1.0"
