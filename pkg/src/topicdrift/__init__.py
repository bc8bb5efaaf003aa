"""Reconstruct co-authorship interest networks, simulate interest diffusion,
and estimate member susceptibility and authority from publication records."""

__version__ = "0.1.0"

from .core import (
    InterestProfile,
    Member,
    SocialGraph,
    WeightedInterestGraph,
    profile_dot,
    profile_distance_sq,
    validate_wig,
)

__all__ = [
    "InterestProfile",
    "Member",
    "SocialGraph",
    "WeightedInterestGraph",
    "profile_dot",
    "profile_distance_sq",
    "validate_wig",
    "__version__",
]
