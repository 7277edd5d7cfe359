"""
Convex-integration constructions and certified approximate solutions for nonmonotone diffusion.
"""

__version__ = "0.1.0"
