"""patchssl: semi-supervised pseudo-label training for binary image patches."""

__version__ = "0.1.0"
