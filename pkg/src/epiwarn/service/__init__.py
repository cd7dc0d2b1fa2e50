"""HTTP service wrapping the epiwarn engine."""
