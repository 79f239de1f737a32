"""Semiclassical wave-packet propagation in phase space."""
