"""
Generative Multi-Intent SLU
===========================

Joint multi-intent detection and slot filling as sequence generation: a
from-scratch encoder-decoder with attention-over-attention and a pointer
head over input positions and label categories, plus the tooling to build
coherent multi-intent corpora and evaluate on them.
"""

__version__ = "0.1.0"
