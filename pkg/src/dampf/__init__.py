"""Day-ahead electricity price forecasting: data preparation, gradient-boosted
trees, an LSTM with error correction, metrics and a benchmark harness."""

__version__ = "0.1.0"
