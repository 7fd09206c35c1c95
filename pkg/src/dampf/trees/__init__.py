"""Tree-construction strategies for the boosting engine."""
