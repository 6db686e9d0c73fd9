"""Blind source separation with local autocovariances, and causality in variance.

Modules
-------
core        matrix container, CSV I/O, seeding
preprocess  common AR prewhitening and PCA
localstats  block partitions and local autocovariances
lacov       the L-ACOV I/II separation objective and optimizer
baselines   SOBI and block-covariance joint diagonalization
garch       univariate GARCH(1,1) and the LM test for ARCH effects
causal      CausalVar-GARCH fits and causality graphs
envelope    modulator decomposition of log-envelopes
synth       simulation recipes and variance-model generators
metrics     Amari index and the benchmark harness
"""

__version__ = "0.1.0"

from .core import TimeSeriesMatrix, read_matrix_csv, write_matrix_csv  # noqa: E402
from .lacov import LacovConfig, SeparationResult, fit  # noqa: E402
from .metrics import amari_index  # noqa: E402

__all__ = ["TimeSeriesMatrix", "read_matrix_csv", "write_matrix_csv", "LacovConfig",
           "SeparationResult", "fit", "amari_index", "__version__"]
