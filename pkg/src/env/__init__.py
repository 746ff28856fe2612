"""Networked multi-agent MDPs and critic feature maps."""
