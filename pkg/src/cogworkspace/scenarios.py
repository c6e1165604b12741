"""Query scripts for the four bundled experiments.

Scripts come back to earlier topics while still introducing new material
each turn. They were picked from a templated pool of corpus topics, so the
exact op counts they produce are properties of these fixtures, not of the
engine. ``{entity}`` in a multi-hop template is replaced by the key entity
of the previous answer; ``{is_}`` and ``{does}`` agree with it in number.
"""

from __future__ import annotations

SCENARIOS = ("basic_4", "extended_10", "multi_hop", "conflict")

ROUNDS = {"basic_4": 4, "extended_10": 10, "multi_hop": 10, "conflict": 10}

SCRIPTS: dict[str, list[str]] = {
    "basic_4": [
        "What is k-means clustering?",
        "How does regularization work?",
        "How does overfitting work?",
        "How does validation work?",
    ],
    "extended_10": [
        "What is positional encoding?",
        "What is unsupervised clustering?",
        "How do transformers work?",
        "What are convolutional filters?",
        "What is overfitting?",
        "Compare convolutional filters and learning rate",
        "Compare overfitting and unsupervised clustering",
        "Compare learning rate and softmax",
        "What is word2vec?",
        "How does unsupervised clustering work?",
    ],
    "multi_hop": [
        "What is backpropagation?",
        "How {does} {entity} work?",
        "What {is_} {entity}?",
        "Tell me more about {entity}",
        "How {does} {entity} work?",
        "Give examples of {entity}",
        "How {does} {entity} work?",
        "What {is_} {entity}?",
        "How {does} {entity} work?",
        "How {does} {entity} work?",
    ],
    "conflict": [
        "What is data augmentation?",
        "How does weight decay work?",
        "How does dropout regularization work?",
        "What is batch normalization?",
        "How does generalization work?",
        "What is overfitting?",
        "How does data augmentation work?",
        "How do large language models work?",
        "How does regularization work?",
        "Compare generalization and large language models",
    ],
}
