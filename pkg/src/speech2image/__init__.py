"""speech2image: two-stage speech-to-image generation at desk scale.

Stage one learns a shared speech/image embedding space from paired data;
stage two trains a relation-supervised stacked conditional generator on
top of the frozen speech embeddings.  A deterministic synthetic corpus,
a full metric suite (IS, FID, retrieval mAP) and a CLI make the whole
pipeline runnable end to end on a laptop.
"""

__version__ = "0.1.0"
