__all__ = ["body", "geometry", "kernel", "scale_mode", "scene", "state", "util"]
