"""Test package for mateforge."""
