"""Graph neural networks for product demand forecasting on supply-chain graphs."""

__version__ = "0.1.0"
