"""Linear action-value critic."""
