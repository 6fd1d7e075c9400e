"""Shared configuration, logging, errors and artefact storage."""
