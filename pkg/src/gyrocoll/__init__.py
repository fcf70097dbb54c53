"""Gyro-kinetic collisional transport models."""
