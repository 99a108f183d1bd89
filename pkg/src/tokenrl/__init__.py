"""Fine-grained (token-level) reward optimisation for small translation policies."""
