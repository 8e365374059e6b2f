"""Live score following on rendered one-staff strips.

Streaming 136-band log-filterbank frontend at 15 fps, a two-pathway
convolutional matcher over (audio excerpt, sheet window) pairs, a
recentering tracker, and an online-DTW smoother, plus the synthetic
training pipeline, CLI, and FastAPI session service that tie them
together.
"""

__version__ = "0.1.0"
