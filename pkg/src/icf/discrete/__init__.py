"""Enumerated feature-policy pairs trained with the selectivity reward."""
from .model import DiscreteICF, EncoderDecoder, PolicyBank
from .selectivity import MODES, SelectivityMode, selectivity, selectivity_all, selectivity_graph
from .train import DiscreteTrainer, TrainConfig, reinforce_loss, train_selectivity_only

__all__ = [
    "DiscreteICF", "DiscreteTrainer", "EncoderDecoder", "MODES", "PolicyBank", "SelectivityMode",
    "TrainConfig", "reinforce_loss", "selectivity", "selectivity_all", "selectivity_graph",
    "train_selectivity_only",
]
