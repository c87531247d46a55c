"""Tests for the pushplan package."""
