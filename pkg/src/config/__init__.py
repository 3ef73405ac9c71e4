"""Configuration module for the outage analysis."""

from .settings import *
