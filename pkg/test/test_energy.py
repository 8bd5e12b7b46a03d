import dataclasses

import numpy as np
import pytest

from egocapture4d.core.body import DEFAULT_CONTACT_GROUPS, DEFAULT_SKELETON
from egocapture4d.core.geometry import Pose3, project_points
from egocapture4d.core.kernel import RobustKernel
from egocapture4d.core.scene import build_index
from egocapture4d.core.state import BodyState, camera_to_world, posed_sequence
from egocapture4d.energy.problem import TERMS, FittingInputs, FittingProblem, SequenceParams, e_total
from egocapture4d.energy.terms import (
    FreeSet,
    KernelSet,
    NonPositiveScale,
    Observation2D,
    SequenceTooShort,
    Weights,
    annealing_weights,
    e_camera_prior,
    e_contact,
    e_joint,
    e_pose_prior,
    e_shape_prior,
    e_temporal,
    pose_prior_weights,
)
from egocapture4d.synth.scenario import observations_from_truth

JOINT_KERNEL = RobustKernel(100.0)


def exact_observation(bundle, frame: int) -> Observation2D:
    joints, _ = posed_sequence(DEFAULT_SKELETON, [bundle.truth.states[frame]])
    pixels, valid = project_points(bundle.inputs.intrinsics, joints[0])
    return Observation2D(pixels, valid.astype(np.float64))


def test_joint_energy_of_exact_detections(small_bundle):
    """
    Test that the true state has no reprojection energy against its own projections
    """
    state = small_bundle.truth.states[0]
    observation = exact_observation(small_bundle, 0)
    assert e_joint(state, small_bundle.inputs.intrinsics, observation, JOINT_KERNEL) == pytest.approx(0.0, abs=1e-18)


def test_joint_energy_single_residual(small_bundle):
    """
    Test a residual of exactly sigma on one joint, and its annealing weight
    """
    state = small_bundle.truth.states[0]
    exact = exact_observation(small_bundle, 0)
    positions = exact.positions.copy()
    positions[0, 0] += 100.0
    observation = Observation2D(positions, np.ones(DEFAULT_SKELETON.joint_count))
    intrinsics = small_bundle.inputs.intrinsics
    assert e_joint(state, intrinsics, observation, JOINT_KERNEL) == pytest.approx(0.5)

    weights = np.ones(DEFAULT_SKELETON.joint_count)
    weights[0] = 2.0
    assert e_joint(state, intrinsics, observation, JOINT_KERNEL, joint_weights=weights) == pytest.approx(1.0)

    confidence = np.ones(DEFAULT_SKELETON.joint_count)
    confidence[0] = 0.0
    hidden = Observation2D(positions, confidence)
    assert e_joint(state, intrinsics, hidden, JOINT_KERNEL) == pytest.approx(0.0, abs=1e-18)


def test_joint_energy_behind_camera(small_bundle):
    """
    Test that joints behind the camera contribute nothing
    """
    state = small_bundle.truth.states[0]
    data = state.to_dict()
    data["root_translation"] = [0.0, 0.0, -4.0]
    behind = BodyState.from_dict(data)
    observation = Observation2D(np.full((DEFAULT_SKELETON.joint_count, 2), 10.0), np.ones(DEFAULT_SKELETON.joint_count))
    assert e_joint(behind, small_bundle.inputs.intrinsics, observation, JOINT_KERNEL) == 0.0


def test_observation_validation():
    """
    Test that confidences must lie in [0, 1] and undetected positions are cleared
    """
    with pytest.raises(ValueError):
        Observation2D(np.zeros((2, 2)), np.array([0.5, 1.5]))
    with pytest.raises(ValueError):
        Observation2D(np.zeros((2, 2)), np.array([0.5]))
    observation = Observation2D(np.array([[3.0, 4.0], [5.0, 6.0]]), np.array([0.0, 1.0]))
    np.testing.assert_array_equal(observation.positions, [[0.0, 0.0], [5.0, 6.0]])
    assert observation.missing_fraction == 0.5


def test_priors():
    """
    Test the shape prior and the weighted pose prior
    """
    assert e_shape_prior(np.array([0.1, -0.2])) == pytest.approx(0.05)
    theta = np.zeros((DEFAULT_SKELETON.joint_count, 3))
    knee = DEFAULT_SKELETON.index("left_knee")
    theta[knee] = [0.5, 0.5, 0.0]
    assert e_pose_prior(theta) == pytest.approx(0.5)
    assert e_pose_prior(theta, weights=pose_prior_weights(twist_weight=4.0)) == pytest.approx(0.25 + 4.0 * 0.25)
    assert e_pose_prior(theta, rest=theta) == 0.0


def test_annealing_weights():
    """
    Test that only limb joints take the annealing weight
    """
    weights = annealing_weights(limb_weight=0.0)
    assert weights[DEFAULT_SKELETON.index("left_wrist")] == 0.0
    assert weights[DEFAULT_SKELETON.index("right_knee")] == 0.0
    assert weights[DEFAULT_SKELETON.index("pelvis")] == 1.0
    assert weights[DEFAULT_SKELETON.index("left_hip")] == 1.0


def test_temporal_energy():
    """
    Test the zero-acceleration prior on constant velocity, accelerated and fully detected joints
    """
    frames = np.arange(5, dtype=np.float64)
    constant = frames[:, None, None] * np.array([[[1.0, 0.5, 0.0]]])
    kernel = RobustKernel(0.1)
    half = np.full((5, 1), 0.5)
    assert e_temporal(constant, half, kernel) == pytest.approx(0.0, abs=1e-18)

    accelerated = constant.copy()
    accelerated[2, 0, 2] = 0.1
    # the bump shows up in three stencils: accelerations 0.1, -0.2, 0.1
    expected = 0.5 * (0.5 + 4.0 / 5.0 + 0.5)
    assert e_temporal(accelerated, half, kernel) == pytest.approx(expected)
    assert e_temporal(accelerated, np.ones((5, 1)), kernel) == 0.0

    confidence = np.ones((5, 1))
    confidence[1] = 0.0
    # frame 1 undetected: the stencils centered on frames 1 and 2 are weighted fully
    assert e_temporal(accelerated, confidence, kernel) == pytest.approx(0.5 + 0.8)


def test_temporal_needs_three_frames():
    """
    Test that the temporal prior refuses sequences shorter than three frames
    """
    with pytest.raises(SequenceTooShort):
        e_temporal(np.zeros((2, 4, 3)), np.zeros((2, 4)), RobustKernel(0.1))


def test_contact_energy(small_bundle):
    """
    Test the contact energy against a direct nearest-vertex computation
    """
    truth = small_bundle.truth
    index = FittingProblem(small_bundle.inputs).index
    kernel = RobustKernel(0.2)
    groups = ("left_sole", "right_sole")
    value = e_contact(truth.states, truth.camera_poses, index, truth.scale, kernel, groups=groups)

    _, contacts = posed_sequence(DEFAULT_SKELETON, truth.states, groups)
    roots = np.stack([state.root.translation for state in truth.states])
    points = camera_to_world(contacts, roots, truth.camera_poses, truth.scale).reshape(-1, 3)
    vertices = small_bundle.inputs.scene.vertices
    distances = np.min(np.linalg.norm(points[:, None, :] - vertices[None, :, :], axis=-1), axis=1)
    expected = np.sum(distances**2 / (0.04 + distances**2))
    assert value == pytest.approx(expected, rel=1e-9)

    with pytest.raises(NonPositiveScale):
        e_contact(truth.states, truth.camera_poses, index, 0.0, kernel, groups=groups)


def test_stance_feet_touch_the_scene(small_bundle):
    """
    Test that the true stance soles lie on the scene at the true scale
    """
    truth = small_bundle.truth
    points = truth.estimate().contact_points_world(DEFAULT_SKELETON)
    index = FittingProblem(small_bundle.inputs).index
    _, distances = index.query(points.reshape(-1, 3))
    distances = distances.reshape(points.shape[:2])
    stance = truth.stance[:, : points.shape[1]]
    assert stance.any()
    # within the stance height plus the vertex spacing
    assert np.all(distances[stance] < truth.scale * 0.06)


def test_total_is_weighted_term_sum(small_bundle):
    """
    Test that the total is the weighted sum of the unweighted terms
    """
    weights = Weights(lambda_beta=0.3, lambda_theta=0.2, lambda_contact=0.5, lambda_temporal=0.7, lambda_camera=2.0)
    problem = FittingProblem(small_bundle.inputs, weights=weights)
    params = SequenceParams.from_states(small_bundle.truth.states, small_bundle.truth.scale)
    rng = np.random.default_rng(8)
    params = params.replace(
        camera_rotation=0.01 * rng.standard_normal(params.camera_rotation.shape),
        camera_translation=0.02 * rng.standard_normal(params.camera_translation.shape),
    )
    problem.refresh_correspondences(params)
    terms = problem.terms(params)
    assert set(terms) == set(TERMS) | {"total"}
    expected = (
        terms["joint"]
        + 0.3 * terms["shape"]
        + 0.2 * terms["pose"]
        + 0.5 * terms["contact"]
        + 0.7 * terms["temporal"]
        + 2.0 * terms["camera"]
    )
    assert terms["camera"] > 0.0
    assert terms["total"] == pytest.approx(expected, rel=1e-12)
    assert problem.energy(params) == pytest.approx(expected, rel=1e-12)


def test_per_frame_terms(small_bundle):
    """
    Test the per-frame split of every term
    """
    problem = FittingProblem(small_bundle.inputs)
    params = SequenceParams.from_states(small_bundle.truth.states, small_bundle.truth.scale)
    problem.refresh_correspondences(params)
    per_frame = problem.frame_terms(params)
    frames = small_bundle.frames
    assert per_frame["joint"].shape == (frames,)
    assert per_frame["temporal"].shape == (frames - 2,)
    for name, value in problem.terms(params).items():
        if name != "total":
            assert value == pytest.approx(per_frame[name].sum())


def test_scale_free_without_scene_terms(small_bundle):
    """
    Test that without contact and temporal weights the total does not depend on the scale
    """
    truth = small_bundle.truth
    weights = Weights(lambda_contact=0.0, lambda_temporal=0.0)
    values = [
        e_total(truth.states, small_bundle.inputs.camera_poses, scale, small_bundle.inputs, weights)
        for scale in (0.5, 1.0, 4.0)
    ]
    assert values[0] == pytest.approx(values[1], rel=1e-12)
    assert values[2] == pytest.approx(values[1], rel=1e-12)
    with pytest.raises(NonPositiveScale):
        e_total(truth.states, small_bundle.inputs.camera_poses, -1.0, small_bundle.inputs, weights)


def test_contact_weight_adds_separately(small_bundle):
    """
    Test that switching a weight on adds exactly its weighted term
    """
    truth = small_bundle.truth
    inputs = small_bundle.inputs
    base = Weights(lambda_contact=0.0, lambda_temporal=0.0)
    with_contact = dataclasses.replace(base, lambda_contact=0.25)
    problem = FittingProblem(inputs, weights=with_contact)
    params = SequenceParams.from_states(truth.states, truth.scale)
    problem.refresh_correspondences(params)
    contact = problem.terms(params)["contact"]
    e_base = e_total(truth.states, inputs.camera_poses, truth.scale, inputs, base)
    e_contact_on = e_total(truth.states, inputs.camera_poses, truth.scale, inputs, with_contact)
    assert e_contact_on - e_base == pytest.approx(0.25 * contact, rel=1e-9, abs=1e-12)


def test_temporal_weight_on_short_sequence(small_bundle):
    """
    Test that a temporal weight on a two-frame sequence raises SequenceTooShort
    """
    inputs = FittingInputs(
        small_bundle.inputs.intrinsics,
        small_bundle.inputs.observations[:2],
        small_bundle.inputs.camera_poses[:2],
    )
    problem = FittingProblem(inputs, weights=Weights(lambda_temporal=0.1))
    params = SequenceParams.from_states(small_bundle.truth.states[:2])
    with pytest.raises(SequenceTooShort):
        problem.energy(params)
    assert FittingProblem(inputs).terms(params)["temporal"] == 0.0


def test_noise_free_truth_minimizes_joint_term(small_bundle):
    """
    Test that noise-free detections give the true sequence zero joint energy
    """
    inputs = dataclasses.replace(small_bundle.inputs, observations=observations_from_truth(small_bundle))
    problem = FittingProblem(inputs)
    params = SequenceParams.from_states(small_bundle.truth.states, small_bundle.truth.scale)
    assert problem.terms(params)["joint"] == pytest.approx(0.0, abs=1e-16)


def test_inputs_length_mismatch(small_bundle):
    """
    Test that observations and camera poses must have the same length
    """
    with pytest.raises(ValueError):
        FittingInputs(
            small_bundle.inputs.intrinsics,
            small_bundle.inputs.observations,
            small_bundle.inputs.camera_poses[:-1],
        )


def test_pack_unpack(small_bundle):
    """
    Test that unpack restores the free blocks and reuses the frozen ones
    """
    problem = FittingProblem(small_bundle.inputs, kernels=KernelSet())
    params = SequenceParams.from_states(small_bundle.truth.states, 2.0)
    free = FreeSet.of(["theta", "scale"])
    flat = problem.pack(params, free)
    assert flat.shape == (params.theta.size + 1,)
    assert flat[-1] == pytest.approx(np.log(2.0))
    restored = problem.unpack(flat + 1.0, free, params)
    np.testing.assert_allclose(restored.theta, params.theta + 1.0)
    assert restored.scale == pytest.approx(2.0 * np.e)
    assert restored.beta is params.beta
    assert restored.camera_rotation is params.camera_rotation


def test_free_set():
    """
    Test the parameter block set
    """
    free = FreeSet.of(["scale", "beta"])
    assert free.names() == ("beta", "scale")
    assert free.without("beta").names() == ("scale",)
    assert not FreeSet()
    with pytest.raises(ValueError):
        FreeSet.of(["shoulders"])


def test_negative_weight_refused():
    """
    Test that weights must be non-negative
    """
    with pytest.raises(ValueError):
        Weights(lambda_contact=-0.1)


def test_total_matches_single_term_functions(small_bundle):
    """
    Test that e_total is the weighted sum of e_joint, the priors, e_contact and e_temporal
    """
    inputs = small_bundle.inputs
    skeleton = small_bundle.skeleton
    kernels = KernelSet()
    weights = Weights(lambda_beta=0.3, lambda_theta=0.2, lambda_contact=0.5, lambda_temporal=0.7)
    rng = np.random.default_rng(6)
    params = SequenceParams.from_states(small_bundle.truth.states)
    states = params.replace(
        beta=params.beta + 0.05 * rng.standard_normal(params.beta.shape),
        theta=params.theta + 0.1 * rng.standard_normal(params.theta.shape),
        root_translation=params.root_translation + 0.05 * rng.standard_normal(params.root_translation.shape),
    ).states()
    poses = inputs.camera_poses
    scale = 1.7

    joint = sum(
        e_joint(state, inputs.intrinsics, observation, kernels.joint, skeleton=skeleton)
        for state, observation in zip(states, inputs.observations)
    )
    shape = sum(e_shape_prior(state.shape.beta) for state in states)
    prior_weights = pose_prior_weights(skeleton, 4.0)
    pose = sum(e_pose_prior(state.pose.theta, weights=prior_weights) for state in states)
    index = build_index(inputs.scene)
    contact = e_contact(states, poses, index, scale, kernels.contact, skeleton, DEFAULT_CONTACT_GROUPS)
    joints, _ = posed_sequence(skeleton, states)
    roots = np.stack([state.root.translation for state in states])
    world = camera_to_world(joints, roots, poses, scale)
    temporal = e_temporal(world, inputs.confidences(), kernels.temporal, scale)

    expected = joint + 0.3 * shape + 0.2 * pose + 0.5 * contact + 0.7 * temporal
    assert contact > 0.0 and temporal > 0.0
    assert e_total(states, poses, scale, inputs, weights, kernels, skeleton) == pytest.approx(expected, rel=1e-12)


def test_temporal_energy_is_measured_in_body_units():
    """
    Test that scaling world joints and the scale together leaves the temporal prior unchanged
    """
    rng = np.random.default_rng(4)
    joints = rng.standard_normal((6, 3, 3)) * 0.05 + np.arange(6)[:, None, None]
    confidence = np.zeros((6, 3))
    kernel = RobustKernel(0.1)
    base = e_temporal(joints, confidence, kernel, scale=1.0)
    assert base > 0.0
    for factor in (0.5, 2.0, 7.0):
        assert e_temporal(factor * joints, confidence, kernel, scale=factor) == pytest.approx(base, rel=1e-12)
    assert e_temporal(2.0 * joints, confidence, kernel) > base
    with pytest.raises(NonPositiveScale):
        e_temporal(joints, confidence, kernel, scale=0.0)


def test_temporal_term_has_no_scale_pull_at_a_consistent_scene(small_bundle):
    """
    Test that growing scene and scale together leaves the problem's temporal term unchanged
    """
    truth = small_bundle.truth
    values = []
    for factor in (1.0, 3.0):
        inputs = FittingInputs(
            small_bundle.inputs.intrinsics,
            small_bundle.inputs.observations,
            [Pose3(pose.rotation, factor * pose.translation) for pose in truth.camera_poses],
        )
        problem = FittingProblem(inputs, weights=Weights(lambda_temporal=0.1))
        values.append(problem.terms(SequenceParams.from_states(truth.states, factor * truth.scale))["temporal"])
    assert values[0] > 0.0
    assert values[1] == pytest.approx(values[0], rel=1e-9)


def test_camera_prior(small_bundle):
    """
    Test that the camera prior is the squared size of the camera increments and vanishes without them
    """
    inputs = small_bundle.inputs
    params = SequenceParams.from_states(small_bundle.truth.states, small_bundle.truth.scale)
    problem = FittingProblem(inputs)
    assert problem.terms(params)["camera"] == 0.0

    rotation = np.zeros_like(params.camera_rotation)
    translation = np.zeros_like(params.camera_translation)
    rotation[1] = [0.0, 0.03, 0.0]
    translation[3] = [0.1, 0.0, -0.2]
    moved = params.replace(camera_rotation=rotation, camera_translation=translation)
    assert problem.terms(moved)["camera"] == pytest.approx(0.03**2 + 0.05)
    refined = moved.camera_poses(inputs.camera_poses)
    assert e_camera_prior(refined, inputs.camera_poses) == pytest.approx(0.03**2 + 0.05, rel=1e-9)

    weights = Weights(lambda_contact=0.0, lambda_temporal=0.0)
    without = dataclasses.replace(weights, lambda_camera=0.0)
    with_prior = FittingProblem(inputs, weights=weights).energy(moved)
    assert with_prior - FittingProblem(inputs, weights=without).energy(moved) == pytest.approx(100.0 * (0.03**2 + 0.05))
