"""Reference predictor-protocol server and fine-tuning config emitter.

Thin companion to the surgbench harness: serves /v1/predict (and /v1/track)
over HTTP with pluggable backends, and writes trainer configuration files.
It never runs training itself.
"""

__version__ = "0.1.0"
