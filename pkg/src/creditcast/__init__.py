"""Forecasting next-quarter credit rating movements from filings text, fundamentals and macro data."""

from .core import (LABEL_ORDER, RATING_LEVELS, SP_SCALE, FeatureVector, MovementLabel, Prediction, QuarterId,
                   RatingScale, Sample, compare_ratings, movement_label, rating_rank)
from .errors import CreditCastError

__version__ = "0.1.0"

__all__ = ["LABEL_ORDER", "RATING_LEVELS", "SP_SCALE", "CreditCastError", "FeatureVector", "MovementLabel",
           "Prediction", "QuarterId", "RatingScale", "Sample", "compare_ratings", "movement_label", "rating_rank"]
