class ScaleMode:
    """Where the body-vs-scene scale factor is applied"""

    # scale the camera-frame body points: body size and camera distance together
    camera = "camera"
    # scale body-frame points about the root, the literal placement
    body = "body"

    @classmethod
    def values(cls):
        return (cls.camera, cls.body)
