"""Dual-domain (spatial + spectral) convolutional detector built on a small numpy autograd."""

__version__ = "0.1.0"
