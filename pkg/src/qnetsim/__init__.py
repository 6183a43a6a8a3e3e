"""qnetsim: density-matrix and Monte Carlo simulation of a two-node quantum network link.

Modules
-------
qcore       registers, density matrices, Kraus channels, measurements
cavity      spin-dependent cavity reflection
spinphoton  time-bin photons, spin-photon gates, interferometer heralding
photonlink  frequency conversion, fiber, link budgets, polarization control
protocol    exact outcome tables, seeded trials, rates
analysis    Bell fidelity, error budgets, SNR model
config/cli  TOML experiment configs and the command-line runner
"""

__version__ = "0.1.0"
