"""Panel ingestion and quarter literal parsing."""
