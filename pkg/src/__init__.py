"""
Push-Sum Actor-Critic
Decentralized multi-agent actor-critic learning over directed communication graphs.
"""

__version__ = "0.1.0"
