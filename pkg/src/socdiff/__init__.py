"""Social learning of a binary claim on networks with recurrent Q-learning agents."""

__version__ = "0.1.0"
