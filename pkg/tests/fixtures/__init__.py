"""Test fixtures for Zenhub webhook payloads."""
