"""Multi-stage drivers built on the stages."""
