"""
MEMS App – pull-in voltage, minimal solutions and touchdown for the
generalized MEMS equation u_t = Δu + λ f(x) / g(u).
"""

__version__ = "0.1.0"
