"""
Importance ARQ - data-importance aware retransmission for wireless data acquisition in edge learning
"""

__version__ = "1.0.0"
__description__ = "Simulator for importance-aware ARQ over Rayleigh fading with SVM and softmax learners"
