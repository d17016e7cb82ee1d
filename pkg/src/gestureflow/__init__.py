"""Speech-to-gesture toolkit: BVH + mel-spectrogram data pipeline, a
conditional normalizing-flow motion model with autoregressive sampling, and
gesture-space / velocity-peak evaluation."""

__version__ = "0.1.0"
