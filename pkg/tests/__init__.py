"""Tests for vortex-patches."""
