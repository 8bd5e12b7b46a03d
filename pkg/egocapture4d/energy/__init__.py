__all__ = ["problem", "terms"]
