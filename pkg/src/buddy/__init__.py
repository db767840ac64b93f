"""Cross-embodiment interaction imitation: learn sparse interaction graphs
from two-character demonstrations and transfer them to new morphologies."""

__version__ = "0.1.0"
