"""HTTP service exposing the toolkit; the CLI calls the same handlers."""
