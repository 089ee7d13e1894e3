"""Pro-forma versus live performance decay of systematic strategies.

Vol-adjusted performance and decay, peer and index benchmarks, fixed-effects
regressions with clustered and bootstrap inference, regime and crowding
channels, a haircut rule and an out-of-sample failure classifier.
"""

__version__ = "0.1.0"
