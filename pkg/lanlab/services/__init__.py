"""Service layer: replication runners, the check suite and report writing."""
