"""Stochastic service curve estimation from constant-rate packet trains."""
from .maxplus import (LOST, BivariateService, DomainExceededError, EmptyEstimateError,
                      MinPlusCurve, ServiceCurveEstimate, TimestampSeries, concave_conjugate,
                      f_transform, legendre_self_inverse_check, legendre_transform,
                      maxplus_convolve, minplus_convolve, negative_binomial_slots, onoff_bounds,
                      packetize, pseudo_inverse)

__version__ = "0.1.0"
