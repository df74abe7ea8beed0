"""igeo: numerical differential geometry of statistical models and immersions.

Compute Fisher metrics, alpha-connections, curvature, induced immersion
data and exponential-family structure, and verify the defining identities
as residual tests on parameter grids.
"""

__version__ = "0.1.0"
