"""
Class-incremental novel class discovery toolkit
"""

__version__ = "0.1.0"
