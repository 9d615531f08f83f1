"""Tests for the lipext package."""
