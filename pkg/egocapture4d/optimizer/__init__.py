__all__ = ["adam", "pipeline", "schedule", "stage"]
