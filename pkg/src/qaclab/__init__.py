"""Benchmark lab for error-corrected annealing on noisy Ising spin glasses.

Subsystems:

* :mod:`qaclab.chimera` -- hardware-style qubit graphs and the encoded logical graph
* :mod:`qaclab.instances` -- spin-glass instances, control noise, gauges
* :mod:`qaclab.qac` -- repetition encoding with penalty, decoding, baselines
* :mod:`qaclab.solvers` -- exact (frontier DP, brute force) and stochastic (SA, PT-ICM)
* :mod:`qaclab.stats` -- gauge-wise bootstrap, time-to-solution, summaries
* :mod:`qaclab.collapse` -- scaling-law fits and classical cost bounds
* :mod:`qaclab.harness` -- end-to-end experiment pipeline behind the CLI
"""

__version__ = "0.1.0"
