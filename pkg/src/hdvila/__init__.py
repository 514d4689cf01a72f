"""Hybrid-resolution video-language pretraining at desk scale.

Subpackages cover the full pipeline: subtitle alignment into clips, hybrid
high/low-resolution frame sampling, video/text/joint Transformer encoders on
a from-scratch autodiff core, contrastive and masked-language objectives,
retrieval metrics, an embedding-to-generator mapper, and a training CLI.
"""

__version__ = "0.1.0"
