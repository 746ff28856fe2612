"""Per-agent softmax policies."""
