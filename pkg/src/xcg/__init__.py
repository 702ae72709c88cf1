"""Explainable cell graphs: survival models on KNN cell graphs with grid-tiled LRP."""

__version__ = "0.1.0"
