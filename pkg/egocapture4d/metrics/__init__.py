__all__ = ["metrics", "report"]
