"""Interactive-segmentation workbench: segmenters, robot users, evaluation, learning."""

__version__ = "0.1.0"
