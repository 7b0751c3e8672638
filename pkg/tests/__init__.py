"""noncoherent.doa tests."""
