"""s2sreid tests package."""
