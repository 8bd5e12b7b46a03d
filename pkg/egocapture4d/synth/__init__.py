__all__ = ["bundle_io", "camera", "detector", "motion", "scenario", "terrain"]
