"""
Test package for the push-sum actor-critic simulator.
"""
