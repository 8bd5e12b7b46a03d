import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from egocapture4d.core.body import (
    DEFAULT_SKELETON,
    ContactCandidate,
    DimensionMismatch,
    EmptyInput,
    PoseParams,
    RootTransform,
    ShapeParams,
    SkeletonDef,
    body_height,
    bone_mesh,
    consolidate_shape,
    contact_points,
    forward_kinematics,
    rest_pose,
    zero_shape,
)

ORIGIN = RootTransform(np.zeros(3), np.zeros(3))


def chain_skeleton() -> SkeletonDef:
    return SkeletonDef(
        joint_names=("root", "middle", "tip"),
        parents=(-1, 0, 1),
        offsets=np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]),
        shape_groups=(-1, 0, 0),
        contact_candidates=(ContactCandidate(2, (0.0, 0.0, 0.0), "tip"),),
    )


def test_rest_pose_joints():
    """
    Test forward kinematics of the rest pose against the offset table
    """
    joints = forward_kinematics(DEFAULT_SKELETON, zero_shape(), rest_pose(), ORIGIN)
    assert joints.shape == (DEFAULT_SKELETON.joint_count, 3)
    np.testing.assert_allclose(joints[DEFAULT_SKELETON.index("pelvis")], [0.0, 0.0, 0.0])
    np.testing.assert_allclose(joints[DEFAULT_SKELETON.index("left_hip")], [0.1, 0.0, 0.0])
    np.testing.assert_allclose(joints[DEFAULT_SKELETON.index("right_knee")], [-0.1, -0.45, 0.0])
    np.testing.assert_allclose(joints[DEFAULT_SKELETON.index("left_ankle")], [0.1, -0.87, 0.0])
    np.testing.assert_allclose(joints[DEFAULT_SKELETON.index("head")], [0.0, 0.8, 0.0], atol=1e-12)


def test_two_link_chain():
    """
    Test that a joint rotation turns every descendant and that rotations accumulate down the chain
    """
    skeleton = chain_skeleton()
    shape = ShapeParams(np.zeros(1))
    quarter = [0.0, 0.0, math.pi / 2]

    root_turn = PoseParams(np.array([quarter, [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))
    joints = forward_kinematics(skeleton, shape, root_turn, ORIGIN)
    np.testing.assert_allclose(joints, [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 2.0, 0.0]], atol=1e-12)

    middle_turn = PoseParams(np.array([[0.0, 0.0, 0.0], quarter, [0.0, 0.0, 0.0]]))
    joints = forward_kinematics(skeleton, shape, middle_turn, ORIGIN)
    np.testing.assert_allclose(joints, [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]], atol=1e-12)

    both = PoseParams(np.array([quarter, quarter, [0.0, 0.0, 0.0]]))
    joints = forward_kinematics(skeleton, shape, both, ORIGIN)
    np.testing.assert_allclose(joints, [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [-1.0, 1.0, 0.0]], atol=1e-12)


def test_root_transform():
    """
    Test that the root orientation and translation place the whole body
    """
    root = RootTransform(np.array([0.5, 0.0, 3.0]), np.array([math.pi, 0.0, 0.0]))
    joints = forward_kinematics(DEFAULT_SKELETON, zero_shape(), rest_pose(), root)
    np.testing.assert_allclose(joints[DEFAULT_SKELETON.index("pelvis")], [0.5, 0.0, 3.0])
    # upside down about x: the head goes to negative y, image up for a camera-frame body
    np.testing.assert_allclose(joints[DEFAULT_SKELETON.index("head")], [0.5, -0.8, 3.0], atol=1e-12)


def test_shape_doubles_bone_length():
    """
    Test that a log multiplier of ln 2 doubles the bones of its group and nothing else
    """
    beta = np.zeros(DEFAULT_SKELETON.shape_count)
    beta[DEFAULT_SKELETON.shape_groups[DEFAULT_SKELETON.index("left_knee")]] = math.log(2.0)
    joints = forward_kinematics(DEFAULT_SKELETON, ShapeParams(beta), rest_pose(), ORIGIN)
    hip, knee, ankle = (joints[DEFAULT_SKELETON.index(name)] for name in ("left_hip", "left_knee", "left_ankle"))
    assert np.linalg.norm(knee - hip) == pytest.approx(0.9)
    assert np.linalg.norm(ankle - knee) == pytest.approx(0.42)


def test_body_height():
    """
    Test the head-to-ankle height and its scaling with a uniform shape
    """
    assert body_height(DEFAULT_SKELETON, zero_shape()) == pytest.approx(1.67)
    doubled = ShapeParams(np.full(DEFAULT_SKELETON.shape_count, math.log(2.0)))
    assert body_height(DEFAULT_SKELETON, doubled) == pytest.approx(3.34)


def test_dimension_mismatch():
    """
    Test that parameters of the wrong size are refused
    """
    with pytest.raises(DimensionMismatch):
        forward_kinematics(DEFAULT_SKELETON, ShapeParams(np.zeros(3)), rest_pose(), ORIGIN)
    with pytest.raises(DimensionMismatch):
        forward_kinematics(DEFAULT_SKELETON, zero_shape(), PoseParams(np.zeros((4, 3))), ORIGIN)


def test_non_finite_parameters():
    """
    Test that NaN parameters are refused when the state is built
    """
    with pytest.raises(ValueError):
        PoseParams(np.full((DEFAULT_SKELETON.joint_count, 3), np.nan))


def test_contact_points():
    """
    Test the position of the sole candidates at rest and the group filter
    """
    points = contact_points(DEFAULT_SKELETON, zero_shape(), rest_pose(), ORIGIN, groups=("left_sole",))
    assert points.shape == (2, 3)
    np.testing.assert_allclose(points[0], [0.1, -0.95, -0.05])
    np.testing.assert_allclose(points[1], [0.1, -0.95, 0.15])
    every = contact_points(DEFAULT_SKELETON, zero_shape(), rest_pose(), ORIGIN)
    assert len(every) == len(DEFAULT_SKELETON.contact_candidates)
    with pytest.raises(ValueError):
        DEFAULT_SKELETON.candidates(("hands",))


def test_consolidate_shape():
    """
    Test the component-wise median, midpoint for an even count
    """
    shapes = [ShapeParams(np.array([value, -value])) for value in (0.1, 0.4, 0.2, 0.3)]
    np.testing.assert_allclose(consolidate_shape(shapes).beta, [0.25, -0.25])
    np.testing.assert_allclose(consolidate_shape(shapes[:3]).beta, [0.2, -0.2])


def test_consolidate_shape_errors():
    """
    Test that empty and ragged shape lists are refused
    """
    with pytest.raises(EmptyInput):
        consolidate_shape([])
    with pytest.raises(DimensionMismatch):
        consolidate_shape([ShapeParams(np.zeros(2)), ShapeParams(np.zeros(3))])


def test_skeleton_validation():
    """
    Test that malformed kinematic trees are refused
    """
    skeleton = chain_skeleton()
    with pytest.raises(ValueError):
        SkeletonDef(
            joint_names=skeleton.joint_names,
            parents=(-1, 2, 0),
            offsets=skeleton.offsets,
            shape_groups=skeleton.shape_groups,
            contact_candidates=skeleton.contact_candidates,
        )
    with pytest.raises(ValueError):
        SkeletonDef(
            joint_names=skeleton.joint_names,
            parents=skeleton.parents,
            offsets=np.zeros((3, 3)),
            shape_groups=skeleton.shape_groups,
            contact_candidates=skeleton.contact_candidates,
        )
    with pytest.raises(DimensionMismatch):
        SkeletonDef(
            joint_names=skeleton.joint_names,
            parents=skeleton.parents,
            offsets=np.zeros((2, 3)),
            shape_groups=skeleton.shape_groups,
            contact_candidates=skeleton.contact_candidates,
        )
    restored = SkeletonDef.from_dict(skeleton.to_dict())
    np.testing.assert_allclose(restored.offsets, skeleton.offsets)
    assert restored.contact_candidates == skeleton.contact_candidates


def test_bone_mesh():
    """
    Test the prism mesh of a posed body
    """
    joints = forward_kinematics(DEFAULT_SKELETON, zero_shape(), rest_pose(), ORIGIN)
    vertices, faces = bone_mesh(DEFAULT_SKELETON, joints, sides=6)
    bones = DEFAULT_SKELETON.joint_count - 1
    assert vertices.shape == (bones * 12, 3)
    assert faces.shape == (bones * 12, 3)
    assert faces.min() == 0 and faces.max() == len(vertices) - 1


def test_random_poses_match_transform_chain():
    """
    Test forward kinematics against an explicit chain of homogeneous transforms
    """
    rng = np.random.default_rng(11)
    skeleton = DEFAULT_SKELETON
    for _ in range(50):
        beta = 0.2 * rng.standard_normal(skeleton.shape_count)
        theta = rng.uniform(-1.0, 1.0, (skeleton.joint_count, 3))
        root = RootTransform(rng.uniform(-1.0, 1.0, 3) + [0.0, 0.0, 4.0], rng.uniform(-2.0, 2.0, 3))
        joints = forward_kinematics(skeleton, ShapeParams(beta), PoseParams(theta), root)

        transforms = []
        for joint in range(skeleton.joint_count):
            local = np.eye(4)
            local[:3, :3] = Rotation.from_rotvec(theta[joint]).as_matrix()
            if joint == 0:
                place = np.eye(4)
                place[:3, :3] = Rotation.from_rotvec(np.array(root.orientation)).as_matrix()
                place[:3, 3] = root.translation
                transforms.append(place @ local)
                continue
            bone = np.eye(4)
            bone[:3, 3] = skeleton.offsets[joint] * np.exp(beta[skeleton.shape_groups[joint]])
            transforms.append(transforms[skeleton.parents[joint]] @ bone @ local)
        expected = np.stack([transform[:3, 3] for transform in transforms])
        np.testing.assert_allclose(joints, expected, atol=1e-12)


def test_consolidate_shape_ignores_frame_order():
    """
    Test that the consolidated shape does not depend on the frame order
    """
    rng = np.random.default_rng(5)
    shapes = [ShapeParams(row) for row in rng.standard_normal((7, 8))]
    reordered = [shapes[i] for i in rng.permutation(7)]
    np.testing.assert_array_equal(consolidate_shape(shapes).beta, consolidate_shape(reordered).beta)
