from boxfinder.search.hill_climbing import hill_climbing
from boxfinder.search.mbf import (
    MbfParams,
    ProposalState,
    ProposalStates,
    mbf_simulate,
    mbf_update,
    monteboxfinder,
    ucb_pair,
)
from boxfinder.search.mcts import MctsParams, mcts, mcts_binary
from boxfinder.search.trace import SearchResult, SearchTrace, TraceError, validate_trace

METHODS = ("hc", "mcts", "mcts-binary", "mbf")

__all__ = [
    "METHODS",
    "MbfParams",
    "MctsParams",
    "ProposalState",
    "ProposalStates",
    "SearchResult",
    "SearchTrace",
    "TraceError",
    "hill_climbing",
    "mbf_simulate",
    "mbf_update",
    "mcts",
    "mcts_binary",
    "monteboxfinder",
    "ucb_pair",
    "validate_trace",
]
