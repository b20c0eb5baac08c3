"""HTTP service exposing stream-engine sessions."""
