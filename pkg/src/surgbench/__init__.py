"""surgbench: benchmark harness for promptable surgical anatomy segmentation."""

__version__ = "0.1.0"
