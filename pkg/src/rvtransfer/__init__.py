"""Realized-variance forecasting for data-scarce assets.

Pools a short-history target with DTW-similar subsequences from long-history
source assets, fits HAR / feedforward-network / boosted-tree forecasters, and
evaluates them in a rolling 1-day-ahead protocol.
"""

__version__ = "0.1.0"
