"""Latent nested priors for two-sample Bayesian analysis.

Library layout:

- ``specialfn``: special functions and tanh-sinh quadrature primitives
- ``crm``: completely random measure families and coincidence probabilities
- ``partition``: two-sample partition type and all partition-probability
  evaluators (nested, latent-nested general / stable / Dirichlet)
- ``sampler``: marginal Gibbs sampler for the stable latent nested mixture
- ``mixture``: Gaussian kernel, normal/inverse-gamma base, density
  estimation, Bayes factor, PACF diagnostics
- ``data``: scenario generators, the iris fixture, CSV ingestion
- ``cli``: the ``lnp`` command-line front end
"""

__version__ = "0.1.0"
