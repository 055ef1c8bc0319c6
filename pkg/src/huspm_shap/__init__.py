"""Utility-mining-driven active learning for clickstream purchase prediction."""

from .sequences import ActionSymbol, Dataset, DatasetSplit, Pattern, UtilityTable, WindowedInstance, find_occurrences

__version__ = "0.1.0"

__all__ = ["ActionSymbol", "Dataset", "DatasetSplit", "Pattern", "UtilityTable", "WindowedInstance",
           "find_occurrences", "__version__"]
