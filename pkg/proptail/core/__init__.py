"""
Library operations: data-generating model, estimators, coupling and
Monte Carlo validation.
"""
