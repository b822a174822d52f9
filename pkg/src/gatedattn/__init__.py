"""Compile linear self-attention into gated recurrent networks, train
recurrent students against attention teachers and inspect what they learn."""

__version__ = "0.1.0"
