"""Matrix Brownian motion, its eigenvector overlaps, and their PDE limits."""
__version__ = "0.1.0"
