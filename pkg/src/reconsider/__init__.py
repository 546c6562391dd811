"""Step-and-reconsider sequence decoding for constructive combinatorial optimization."""
from reconsider.core import ContractViolation, InfeasibleError, Instance, Solution, State, evaluate, rollout
from reconsider.decoder import (
    DecodeConfig,
    DecodeResult,
    budget_multiplier,
    decode,
    equalized_sample_count,
    transition_budget,
)
from reconsider.policy import FeaturizedSoftmaxPolicy, PriorPolicy, UniformPolicy
from reconsider.sbs import sbs_sample
from reconsider.tree import SearchTree

__version__ = "0.1.0"
