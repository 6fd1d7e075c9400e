"""Voice activity detection on top of the ULRS detector."""
