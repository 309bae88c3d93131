"""qcforecast: generative quantile-copula forecasting.

One network learns per-horizon conditional quantile functions (with their
inverses) and a conditional Gaussian copula over the horizons, yielding
statistically consistent predictive sample paths, direct quantile forecasts
at any level, and model-based anomaly scores.
"""

__version__ = "0.1.0"
