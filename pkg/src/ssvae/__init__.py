"""Semi-supervised VAE with a classification head fused into the encoder."""

__version__ = "0.1.0"
