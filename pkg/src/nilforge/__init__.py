"""nilforge: associated families of spacelike CMC-1/2 surfaces in Minkowski
3-space and of minimal surfaces in the Heisenberg group, built from a
prescribed quadratic-differential density by loop-group frame integration.
"""

__version__ = "0.1.0"
