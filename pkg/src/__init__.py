"""
SmoothLab - availability-oblivious learning in composed mechanisms
"""

__version__ = "1.0.0"
