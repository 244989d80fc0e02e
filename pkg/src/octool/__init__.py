"""
octool - Maximum principle certificates, needle variations and envelope
derivatives for parameterized optimal control problems
"""

__version__ = "0.2.0"
