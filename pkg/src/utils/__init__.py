"""
Utilities module - Channel, ARQ policies, classifiers, datasets, metrics and exporters
"""

from .channel import RayleighChannel
from .classifiers import LinearBoundary, MulticlassSvm, SoftmaxModel
from .datasets import LabeledSet, Sample

__all__ = ["RayleighChannel", "LinearBoundary", "MulticlassSvm", "SoftmaxModel", "LabeledSet", "Sample"]
