"""Analysis pipeline for the opening "hook" of video advertisements.

Stages: ingest raw assets, sample hook frames, extract acoustic features,
query a multimodal backend for design-methodology insights, summarize the
insights into topics, and fit an explainable boosted-tree CPI regressor.
"""

__version__ = "0.1.0"
