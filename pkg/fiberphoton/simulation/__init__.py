"""Monte-Carlo photon-stream simulation."""
