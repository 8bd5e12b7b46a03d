__all__ = ["config", "main"]
