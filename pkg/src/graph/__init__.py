"""Communication graphs and mixing matrices."""
