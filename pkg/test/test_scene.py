import numpy as np
import pytest
import trimesh

from egocapture4d.core.scene import (
    EmptyMesh,
    MeshFormatError,
    SceneMesh,
    build_index,
    load_mesh,
    nearest,
    save_mesh,
)


def square(z: float = 0.0) -> SceneMesh:
    vertices = np.array([[0.0, 0.0, z], [1.0, 0.0, z], [1.0, 1.0, z], [0.0, 1.0, z]])
    return SceneMesh(vertices, np.array([[0, 1, 2], [0, 2, 3]]))


def test_mesh_validation():
    """
    Test that NaN vertices and out-of-range faces are refused
    """
    with pytest.raises(ValueError):
        SceneMesh(np.array([[0.0, np.nan, 0.0]]), np.zeros((0, 3)))
    with pytest.raises(ValueError):
        SceneMesh(np.zeros((3, 3)), np.array([[0, 1, 3]]))


def test_merge_and_scale():
    """
    Test that merging offsets the face indices and scaling only moves vertices
    """
    merged = SceneMesh.merge([square(), square(2.0)])
    assert merged.vertices.shape == (8, 3)
    np.testing.assert_array_equal(merged.faces[2:], [[4, 5, 6], [4, 6, 7]])
    scaled = merged.scaled(3.0)
    np.testing.assert_allclose(scaled.vertices, 3.0 * merged.vertices)
    np.testing.assert_array_equal(scaled.faces, merged.faces)


def test_query_matches_brute_force():
    """
    Test the k-d tree answers against a brute-force search
    """
    rng = np.random.default_rng(7)
    vertices = rng.uniform(-5.0, 5.0, size=(10000, 3))
    index = build_index(SceneMesh(vertices, np.zeros((0, 3))))
    points = rng.uniform(-6.0, 6.0, size=(1000, 3))
    ids, distances = index.query(points)
    for start in range(0, len(points), 100):
        chunk = points[start : start + 100]
        brute = np.linalg.norm(chunk[:, None, :] - vertices[None, :, :], axis=-1)
        np.testing.assert_array_equal(ids[start : start + 100], np.argmin(brute, axis=1))
        np.testing.assert_allclose(distances[start : start + 100], brute.min(axis=1))


def test_query_tie_prefers_lowest_id():
    """
    Test that equidistant vertices resolve to the lowest vertex id
    """
    vertices = np.array([[5.0, 5.0, 5.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    index = build_index(SceneMesh(vertices, np.zeros((0, 3))))
    ids, distances = index.query(np.zeros((1, 3)))
    assert ids[0] == 1
    assert distances[0] == pytest.approx(1.0)


def test_nearest():
    """
    Test the single point query
    """
    index = build_index(square())
    vertex, distance = nearest(index, [0.9, 1.2, 0.5])
    np.testing.assert_allclose(vertex, [1.0, 1.0, 0.0])
    assert distance == pytest.approx(np.sqrt(0.01 + 0.04 + 0.25))


def test_empty_mesh():
    """
    Test that an index cannot be built without vertices
    """
    with pytest.raises(EmptyMesh):
        build_index(SceneMesh(np.zeros((0, 3)), np.zeros((0, 3))))


def test_obj_file(tmp_path):
    """
    Test writing and reading a mesh as OBJ
    """
    path = tmp_path / "scene.obj"
    mesh = square(0.25)
    save_mesh(path, mesh)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert sum(line.startswith("v ") for line in lines) == 4
    assert sum(line.startswith("f ") for line in lines) == 2
    loaded = load_mesh(path)
    np.testing.assert_allclose(loaded.vertices, mesh.vertices, atol=1e-9)
    np.testing.assert_array_equal(loaded.faces, mesh.faces)


def test_obj_written_by_trimesh_is_readable(tmp_path):
    """
    Test that an OBJ exported by trimesh itself loads into the same triangles
    """
    path = tmp_path / "scene.obj"
    source = trimesh.Trimesh(vertices=square().vertices, faces=square().faces, process=False)
    path.write_text(trimesh.exchange.obj.export_obj(source, include_normals=False), encoding="utf-8")
    loaded = load_mesh(path)
    np.testing.assert_allclose(loaded.vertices[loaded.faces], source.vertices[source.faces], atol=1e-9)


def test_obj_with_texture_references(tmp_path):
    """
    Test that texture and normal references of faces are dropped and comments skipped
    """
    path = tmp_path / "scene.obj"
    path.write_text(
        "# exported\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nvn 0 0 1\nf 1/1/1 2/2/1 3/3/1\n",
        encoding="utf-8",
    )
    loaded = load_mesh(path)
    assert loaded.faces.shape == (1, 3)
    np.testing.assert_allclose(loaded.vertices[loaded.faces[0]], [[0, 0, 0], [1, 0, 0], [0, 1, 0]])


def test_obj_quads_are_triangulated(tmp_path):
    """
    Test that a quad face becomes two triangles over the same corners
    """
    path = tmp_path / "scene.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n", encoding="utf-8")
    loaded = load_mesh(path)
    assert loaded.faces.shape == (2, 3)
    assert len(loaded.vertices) == 4


@pytest.mark.parametrize(
    "content",
    [
        "v 0 0 0\nv 1 0 0\nv 0 1 0\n",
        "",
    ],
)
def test_obj_without_triangles(tmp_path, content):
    """
    Test that files without any triangle raise MeshFormatError
    """
    path = tmp_path / "scene.obj"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(MeshFormatError):
        load_mesh(path)


def test_obj_missing_file(tmp_path):
    """
    Test that a missing mesh file raises FileNotFoundError
    """
    with pytest.raises(FileNotFoundError):
        load_mesh(tmp_path / "missing.obj")
