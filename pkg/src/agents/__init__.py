"""
Agents module - Acquisition runs and their aggregation
"""

from .acquisition_agent import AcquisitionAgent, RunLog, aggregate, run

__all__ = ["AcquisitionAgent", "RunLog", "aggregate", "run"]
