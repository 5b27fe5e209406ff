"""Localizability potentials and deployment simulation for range-measurement
robot networks."""

from ._locnet import *  # noqa: F401,F403
