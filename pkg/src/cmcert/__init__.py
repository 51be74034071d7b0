"""Certified numerics for center-manifold parameterizations of discrete maps.

The toolkit has three layers:

* exact substrate -- truncated multivariate Taylor polynomials over the
  rationals (``jets``) and outward-rounded interval arithmetic
  (``intervals``);
* solvers and certifiers -- spectral splittings (``splitting``), the
  order-by-order conjugacy solver (``conjugacy``), remainder-bound
  certificates (``bounds``) and C^3 cutoffs (``cutoff``);
* the worked application -- a lattice reaction-diffusion map with a
  period-doubling bifurcation (``rdt``), brute-force validation
  (``oracle``) and a command line front end (``cli``).
"""

__version__ = "0.1.0"
