"""scenofuzz: simulation-based scenario fuzzing for autonomous driving stacks."""

__version__ = "0.1.0"
