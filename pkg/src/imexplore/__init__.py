"""Intrinsic-motivation exploration lab: gridworlds, PPO, curiosity bonuses and beta schedules."""

__version__ = "0.1.0"
