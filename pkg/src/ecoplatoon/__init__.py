"""Mixed-platoon traffic simulation with nested-graph reinforcement learning."""

__version__ = "0.1.0"
