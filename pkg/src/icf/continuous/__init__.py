"""Continuous factor embeddings: generator, conditioned policy and attribute selectors."""
from .model import ConditionedPolicy, ContinuousICF, ConvAutoencoder, FactorGenerator
from .selectors import (KINDS, AttributeSelector, attribute_graph, attribute_variation, median_sigma,
                        selectivity_cont)
from .train import ContinuousTrainer, ContTrainConfig, behavior_probs, importance_weights

__all__ = [
    "AttributeSelector", "ConditionedPolicy", "ContTrainConfig", "ContinuousICF", "ContinuousTrainer",
    "ConvAutoencoder", "FactorGenerator", "KINDS", "attribute_graph", "attribute_variation",
    "behavior_probs", "importance_weights", "median_sigma", "selectivity_cont",
]
