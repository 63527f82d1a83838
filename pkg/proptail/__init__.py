"""
proptail: extreme quantile regression under the proportional tail model.

Tail index, integrated and kernel skedasis estimators, Weissman-type
conditional extreme quantiles, a coupling laboratory for the limit model and
a seeded Monte Carlo engine for their asymptotic normality.
"""
__version__ = '1.0.0'
