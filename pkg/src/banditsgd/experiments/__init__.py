"""Simulation environments, Monte-Carlo studies and offline log replay."""
