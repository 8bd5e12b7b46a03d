import dataclasses
import os
import warnings
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import trimesh
from scipy.spatial import KDTree

try:
    import plotly.graph_objects as go

    USE_PLOTLY = True
except ImportError:
    USE_PLOTLY = False

PathType = Union[str, os.PathLike]

# decimal places of exported vertex coordinates
OBJ_DIGITS = 10


class EmptyMesh(ValueError):
    def __init__(self, message):
        super().__init__(message)


class MeshFormatError(ValueError):
    def __init__(self, message):
        super().__init__(message)


@dataclasses.dataclass(frozen=True, eq=False)
class SceneMesh:
    """
    Triangle mesh of the scene.

    Attributes
    ----------
    vertices : np.ndarray
        (N, 3) vertex positions in scene units.
    faces : np.ndarray
        (M, 3) vertex index triples, 0-based.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if np.isnan(vertices).any():
            raise ValueError("scene vertices must not contain NaN")
        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise ValueError("face indices out of range")
        vertices.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)

    def scaled(self, factor: float) -> "SceneMesh":
        return SceneMesh(self.vertices * factor, self.faces)

    @classmethod
    def merge(cls, meshes: Sequence["SceneMesh"]) -> "SceneMesh":
        vertices, faces, offset = [], [], 0
        for mesh in meshes:
            vertices.append(mesh.vertices)
            faces.append(mesh.faces + offset)
            offset += len(mesh.vertices)
        return cls(np.concatenate(vertices), np.concatenate(faces))


class SpatialIndex:
    """
    Exact nearest-vertex queries over the scene vertices, backed by a k-d tree.
    Ties are broken towards the lowest vertex id.
    """

    def __init__(self, vertices: np.ndarray):
        self.vertices = np.array(vertices, dtype=np.float64)
        self.vertices.setflags(write=False)
        self.tree = KDTree(self.vertices, leafsize=16, balanced_tree=True, compact_nodes=True)

    def __len__(self) -> int:
        return len(self.vertices)

    def query(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Nearest vertex of every point.

        Parameters
        ----------
        points : np.ndarray
            (N, 3) query points

        Returns
        -------
        Tuple[np.ndarray, np.ndarray]
            (N,) vertex ids and (N,) Euclidean distances
        """
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        distances, _ = self.tree.query(points, k=1, eps=0.0)
        # every vertex within the reported distance competes for the tie rule
        radii = distances * (1.0 + 1e-12) + 1e-15
        ids = np.empty(len(points), dtype=np.int64)
        best = np.empty(len(points))
        for i, candidates in enumerate(self.tree.query_ball_point(points, radii, eps=0.0)):
            candidates = np.sort(np.asarray(candidates, dtype=np.int64))
            exact = np.linalg.norm(self.vertices[candidates] - points[i], axis=1)
            pick = int(np.argmin(exact))
            ids[i] = candidates[pick]
            best[i] = exact[pick]
        return ids, best


def build_index(mesh: SceneMesh) -> SpatialIndex:
    """
    Build the nearest-vertex index of a scene.

    Parameters
    ----------
    mesh : SceneMesh
        the scene

    Returns
    -------
    SpatialIndex
        index over every scene vertex

    Raises
    ------
    EmptyMesh
        if the mesh has no vertices
    """
    if len(mesh.vertices) == 0:
        raise EmptyMesh("cannot index a mesh without vertices")
    return SpatialIndex(mesh.vertices)


def nearest(index: SpatialIndex, point: Sequence[float]) -> Tuple[np.ndarray, float]:
    """
    Closest scene vertex to a point.

    Parameters
    ----------
    index : SpatialIndex
        built index
    point : Sequence[float]
        query 3-vector

    Returns
    -------
    Tuple[np.ndarray, float]
        the vertex and its distance to the point
    """
    ids, distances = index.query(np.asarray(point, dtype=np.float64)[None])
    return index.vertices[ids[0]].copy(), float(distances[0])


def save_obj(path: PathType, vertices: np.ndarray, faces: np.ndarray):
    """
    Write an ASCII OBJ file with trimesh, vertices and triangles only.

    Parameters
    ----------
    path : PathType
        output file
    vertices : np.ndarray
        (N, 3) vertex positions
    faces : np.ndarray
        (M, 3) 0-based vertex indices
    """
    mesh = trimesh.Trimesh(
        vertices=np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
        faces=np.asarray(faces, dtype=np.int64).reshape(-1, 3),
        process=False,
    )
    text = trimesh.exchange.obj.export_obj(
        mesh,
        include_normals=False,
        include_color=False,
        include_texture=False,
        return_texture=False,
        write_texture=False,
        resolver=None,
        digits=OBJ_DIGITS,
    )
    with open(path, "w", encoding="utf-8", newline="\n") as file_handler:
        file_handler.write(text)


def save_mesh(path: PathType, mesh: SceneMesh):
    save_obj(path, mesh.vertices, mesh.faces)


def load_mesh(path: PathType) -> SceneMesh:
    """
    Read an OBJ file with trimesh. Polygons are triangulated, texture and normal
    references are dropped and vertices no face uses are discarded.

    Parameters
    ----------
    path : PathType
        OBJ file

    Returns
    -------
    SceneMesh
        the mesh

    Raises
    ------
    FileNotFoundError
        if the file does not exist
    MeshFormatError
        if the file cannot be parsed or holds no triangles
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no mesh file at {path}")
    try:
        loaded = trimesh.load(path, file_type="obj", force="mesh", process=False)
    except Exception as error:
        raise MeshFormatError(f"{path}: {error}") from error
    if not isinstance(loaded, trimesh.Trimesh) or len(loaded.faces) == 0:
        raise MeshFormatError(f"{path}: no triangles found")
    return SceneMesh(np.array(loaded.vertices, dtype=np.float64), np.array(loaded.faces, dtype=np.int64))


def visualize(
    mesh: SceneMesh,
    bodies: Optional[Sequence[np.ndarray]] = None,
    max_vertices: int = 20000,
    save_html: bool = False,
    save_to: str = "./egocapture4d_visualization.html",
    always_show: bool = False,
):
    """
    3D figure of the scene vertices and world-frame body joints using plotly.

    Parameters
    ----------
    mesh : SceneMesh
        scene to draw (subsampled to at most max_vertices points)
    bodies : Optional[Sequence[np.ndarray]]
        per-frame (J, 3) world-frame joints
    max_vertices : int, optional
        point budget for the scene, by default 20000
    save_html : bool, optional
        save the figure to save_to instead of showing it, by default False
    save_to : str, optional
        html output path
    always_show : bool, optional
        show the figure even when saving it, by default False
    """
    if not USE_PLOTLY:
        warnings.warn("Plotly is not installed. Please install it to use this feature.")
        return

    stride = max(1, len(mesh.vertices) // max_vertices)
    scene_points = mesh.vertices[::stride]
    traces = [
        go.Scatter3d(
            x=scene_points[:, 0],
            y=scene_points[:, 1],
            z=scene_points[:, 2],
            mode="markers",
            marker=dict(size=1, color="grey", opacity=0.4),
            name="Scene",
        )
    ]

    for frame, joints in enumerate(bodies or []):
        traces.append(
            go.Scatter3d(
                x=joints[:, 0],
                y=joints[:, 1],
                z=joints[:, 2],
                mode="markers",
                marker=dict(size=3, color=frame, colorscale="Viridis", cmin=0, cmax=max(1, len(bodies) - 1)),
                name=f"Frame {frame}",
            )
        )

    layout = go.Layout(
        title="Scene-grounded body sequence",
        scene=dict(aspectmode="data"),
        legend=dict(yanchor="top", y=0.99, xanchor="left", x=0.01),
        autosize=True,
    )
    fig = go.Figure(data=traces, layout=layout)

    if save_html:
        fig.write_html(save_to, auto_open=False)
        print(f"Visualization saved to: {save_to}")

    if always_show or not save_html:
        fig.show()
