"""Desk-scale laboratory for the reduction from turnstile streaming
algorithms to linear sketches: discrete Gaussian streams, posterior
conditioning, large-spectrum structure extraction, translation-invariance
certification, and fiberwise sketch decoding."""

__version__ = "0.1.0"
