"""crossrank: learning-to-rank for cross-lingual retrieval with text and
category embeddings.

The library combines convolutional encoders over pretrained word vectors with
random-walk category embeddings, trained under a pairwise hinge objective, and
ships tf-idf retrieval, score stacking and NDCG evaluation tooling.
"""

__version__ = "0.1.0"
