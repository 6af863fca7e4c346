"""Visual speech recognition toolkit: mouth-ROI pipeline, hybrid CTC/attention model, joint decoding."""

__version__ = "0.1.0"
