"""Geometry independent field approximation (GIFT) for isogeometric analysis."""
