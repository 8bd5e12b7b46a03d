"""
Densely sampled scene primitives: a ground patch and box obstacles.
"""

from typing import List, Tuple

import numpy as np

from ..core.scene import SceneMesh


def grid_patch(origin: np.ndarray, axis_u: np.ndarray, axis_v: np.ndarray, spacing: float) -> SceneMesh:
    """
    Regular triangulated grid spanning origin + s * axis_u + t * axis_v for s, t in [0, 1].

    Parameters
    ----------
    origin : np.ndarray
        corner of the patch
    axis_u, axis_v : np.ndarray
        edge vectors
    spacing : float
        largest distance between neighbouring vertices along an edge

    Returns
    -------
    SceneMesh
        the patch
    """
    origin, axis_u, axis_v = (np.asarray(v, dtype=np.float64) for v in (origin, axis_u, axis_v))
    n_u = max(1, int(np.ceil(np.linalg.norm(axis_u) / spacing)))
    n_v = max(1, int(np.ceil(np.linalg.norm(axis_v) / spacing)))
    s, t = np.meshgrid(np.linspace(0.0, 1.0, n_u + 1), np.linspace(0.0, 1.0, n_v + 1), indexing="ij")
    vertices = origin + s.reshape(-1, 1) * axis_u + t.reshape(-1, 1) * axis_v
    ids = np.arange((n_u + 1) * (n_v + 1)).reshape(n_u + 1, n_v + 1)
    a, b, c, d = ids[:-1, :-1].ravel(), ids[1:, :-1].ravel(), ids[1:, 1:].ravel(), ids[:-1, 1:].ravel()
    faces = np.concatenate([np.stack([a, b, c], axis=1), np.stack([a, c, d], axis=1)])
    return SceneMesh(vertices, faces)


def ground_patch(x_range: Tuple[float, float], y_range: Tuple[float, float], spacing: float) -> SceneMesh:
    return grid_patch(
        np.array([x_range[0], y_range[0], 0.0]),
        np.array([x_range[1] - x_range[0], 0.0, 0.0]),
        np.array([0.0, y_range[1] - y_range[0], 0.0]),
        spacing,
    )


def box_mesh(center: np.ndarray, size: np.ndarray, spacing: float) -> SceneMesh:
    """
    Open-bottom box standing on the ground.

    Parameters
    ----------
    center : np.ndarray
        (x, y) center of the footprint
    size : np.ndarray
        (length, width, height)
    spacing : float
        vertex spacing

    Returns
    -------
    SceneMesh
        four walls and the top
    """
    lx, ly, lz = np.asarray(size, dtype=np.float64)
    x0, y0 = np.asarray(center, dtype=np.float64)[:2] - np.array([lx, ly]) / 2.0
    ex, ey, ez = np.array([lx, 0.0, 0.0]), np.array([0.0, ly, 0.0]), np.array([0.0, 0.0, lz])
    corner = np.array([x0, y0, 0.0])
    sides: List[SceneMesh] = [
        grid_patch(corner, ex, ez, spacing),
        grid_patch(corner + ey, ex, ez, spacing),
        grid_patch(corner, ey, ez, spacing),
        grid_patch(corner + ex, ey, ez, spacing),
        grid_patch(corner + ez, ex, ey, spacing),
    ]
    return SceneMesh.merge(sides)


def make_scene(
    path: np.ndarray,
    rng: np.random.Generator,
    spacing: float = 0.02,
    obstacles: int = 2,
    margin: float = 1.0,
) -> SceneMesh:
    """
    Ground patch under the subject's path plus box obstacles beside it (meters).

    Parameters
    ----------
    path : np.ndarray
        (T, 3) subject root positions
    rng : np.random.Generator
        random stream, one (5,) draw per obstacle
    spacing : float, optional
        vertex spacing, by default 0.02
    obstacles : int, optional
        number of boxes, by default 2
    margin : float, optional
        ground extent around the path, by default 1.0

    Returns
    -------
    SceneMesh
        the scene
    """
    path = np.asarray(path, dtype=np.float64)
    x_range = (path[:, 0].min() - margin, path[:, 0].max() + margin)
    y_range = (path[:, 1].min() - margin, path[:, 1].max() + margin)
    meshes = [ground_patch(x_range, y_range, spacing)]
    for _ in range(obstacles):
        draw = rng.random(5)
        center = np.array([x_range[0] + draw[0] * (x_range[1] - x_range[0]), y_range[0] - 0.3 - 0.5 * draw[1]])
        size = np.array([0.3 + 0.5 * draw[2], 0.3 + 0.3 * draw[3], 0.3 + 0.7 * draw[4]])
        meshes.append(box_mesh(center, size, spacing))
    return SceneMesh.merge(meshes)
