"""Decentralized actor-critic training loops."""
