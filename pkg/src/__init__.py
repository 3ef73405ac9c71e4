"""
Cognitive Two-Way Relay Outage Analysis
Closed-form, asymptotic and Monte Carlo outage analysis for cognitive
two-way decode-and-forward relay networks
"""

__version__ = "1.0.0"
__author__ = "Relay Analysis Team"
