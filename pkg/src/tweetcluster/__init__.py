"""Clustering of short health-related texts with convolutional-autoencoder representations."""

__version__ = "0.1.0"
