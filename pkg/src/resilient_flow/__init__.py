"""Two-stage stochastic network design under corridor disruptions."""

__version__ = "0.1.0"
