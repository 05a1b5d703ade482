"""Multi-level retail product classification (segment, category, subcategory, product)."""

__version__ = "1.0.0"
