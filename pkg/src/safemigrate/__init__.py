"""Staged migration of transpiled C-origin crates toward safe Rust."""

__version__ = "0.1.0"
