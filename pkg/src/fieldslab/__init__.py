"""Simulation and verification lab for higher-order empirical fields of
symmetric exclusion (sigma=-1), independent-walker (sigma=0) and inclusion
(sigma=+1) lattice gases on a periodic torus.

Subpackages and modules:

- ``lattice``        torus geometry, occupancy configurations, admissibility
- ``measures``       reversible product measures, sampling, factorial moments
- ``dynamics``       exact event-driven simulation of the particle system
- ``dual``           the labeled k-particle companion process and its use for
                     computing factorial moments forwards and backwards
- ``fields``         kth-order empirical fields, fluctuation fields,
                     product expansions, carre du champ
- ``testfunctions``  smooth periodic test-function families and the discrete
                     difference operators acting on them
- ``exact``          small-system generator matrices, reversibility and
                     duality residuals, exact semigroup evaluation
- ``theory``         closed-form scaling-limit targets (heat flow, limiting
                     covariances, noise quadratic variation)
- ``harness``        experiment runner, CLI, statistics and serialization
"""

from fieldslab.lattice import Torus

__version__ = "0.1.0"

__all__ = ["Torus", "__version__"]
