"""Integration tests for end-to-end flows."""
