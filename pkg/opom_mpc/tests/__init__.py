"""Unit tests for opom_mpc."""
