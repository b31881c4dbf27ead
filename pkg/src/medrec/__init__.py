"""Two-stage attention medication recommender.

Stage 1 encodes a patient's visit sequence into a query vector with
two-level attention and a key-value memory of past prescriptions; stage 2
attends over graph-encoded drug co-occurrence and interaction knowledge.
Every recommended medication comes with an exact additive decomposition of
its logit into per-source, per-code contribution scores.
"""

__version__ = "0.1.0"
