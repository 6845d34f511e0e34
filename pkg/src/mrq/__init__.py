"""Model-based representations for model-free Q-learning.

A self-contained learner (encoders trained on reward/dynamics/terminal
prediction, twin Q-networks and a deterministic policy on the learned
embeddings), built-in desk-scale environments, and an exact linear-algebra
verifier for the underlying fixed-point and value-equivalence results.
"""

__version__ = "0.1.0"
