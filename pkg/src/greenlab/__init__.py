"""Random walks, Green functions and Floyd metrics on free products."""

__version__ = "0.1.0"
