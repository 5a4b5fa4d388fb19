"""ringflux: simulation and verification lab for the fluctuation fields of a
one-dimensional lattice system conserving energy and volume.

The microscopic process (Hamiltonian drift + bond-exchange noise on the
ring, observed at an accelerated time scale) is evolved exactly in law up
to a controllable splitting error; its fluctuation fields are compared
against the limiting stochastic PDEs (Ornstein-Uhlenbeck, drifted OU,
trivial transport, stochastic Burgers) solved by exact spectral schemes.
"""

__version__ = "0.1.0"
