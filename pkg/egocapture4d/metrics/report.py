"""
Metrics of one fit against a bundle, and their CSV and JSON forms.

CSV columns, in order::

    run, pje_u, pje_p, smoothness, contact_distance, contact_distance_stance,
    scale_rel_error, joint3d_error_visible, joint3d_error_occluded

Metrics that cannot be computed (no partially observable frame, no ground truth)
are empty in the CSV and null in the JSON.
"""

import csv
import dataclasses
import json
import math
from typing import Dict, List, Optional, Sequence

from ..core.body import DEFAULT_CONTACT_GROUPS, body_height
from ..core.geometry import project_points
from ..core.scene import PathType, SpatialIndex, build_index
from ..core.state import SequenceEstimate, posed_sequence
from ..synth.scenario import ScenarioBundle
from .metrics import (
    PARTIAL_FRACTION,
    EmptySubset,
    contact_distance,
    joint3d_error,
    partial_frames,
    pje,
    scale_rel_error,
    smoothness,
    uniform_frames,
)

COLUMNS = (
    "run",
    "pje_u",
    "pje_p",
    "smoothness",
    "contact_distance",
    "contact_distance_stance",
    "scale_rel_error",
    "joint3d_error_visible",
    "joint3d_error_occluded",
)

NAN = float("nan")


class FrameCountMismatch(ValueError):
    def __init__(self, message):
        super().__init__(message)


@dataclasses.dataclass
class MetricsReport:
    """
    Evaluation of one fit. NaN marks an unavailable metric.

    Attributes
    ----------
    run : str
        label of the fit
    pje_u : float
        2D joint error over uniformly sampled frames (pixels)
    pje_p : float
        2D joint error over partially observable frames (pixels)
    smoothness : float
        mean normalized joint acceleration
    contact_distance : float
        mean contact candidate distance to the scene (scene units)
    contact_distance_stance : float
        same over candidates in stance in the ground truth
    scale_rel_error : float
        relative error of the recovered scale
    joint3d_error_visible : float
        camera-frame 3D error of detected joints (body units)
    joint3d_error_occluded : float
        camera-frame 3D error of undetected joints (body units)
    """

    run: str
    pje_u: float = NAN
    pje_p: float = NAN
    smoothness: float = NAN
    contact_distance: float = NAN
    contact_distance_stance: float = NAN
    scale_rel_error: float = NAN
    joint3d_error_visible: float = NAN
    joint3d_error_occluded: float = NAN

    def to_dict(self) -> Dict:
        """Values keyed by column; NaN becomes None."""
        return {
            column: (None if isinstance(value, float) and math.isnan(value) else value)
            for column, value in ((column, getattr(self, column)) for column in COLUMNS)
        }


def _or_nan(function, *args, **kwargs) -> float:
    try:
        return function(*args, **kwargs)
    except EmptySubset:
        return NAN


def evaluate(
    bundle: ScenarioBundle,
    estimate: SequenceEstimate,
    run: str = "fit",
    contact_groups: Optional[Sequence[str]] = DEFAULT_CONTACT_GROUPS,
    partial_fraction: float = PARTIAL_FRACTION,
    uniform_stride: int = 1,
    index: Optional[SpatialIndex] = None,
) -> MetricsReport:
    """
    Evaluate a fit against its bundle.

    Parameters
    ----------
    bundle : ScenarioBundle
        inputs and, when present, ground truth
    estimate : SequenceEstimate
        the fit
    run : str
        row label
    contact_groups : Optional[Sequence[str]]
        contact groups of the contact distance (the fitted ones by default), all candidates if None
    partial_fraction : float
        share of undetected joints that makes a frame partially observable
    uniform_stride : int
        frame stride of the uniform sample
    index : Optional[SpatialIndex]
        prebuilt scene index

    Returns
    -------
    MetricsReport
        the metrics

    Raises
    ------
    FrameCountMismatch
        if estimate and bundle differ in length
    """
    if len(estimate) != bundle.frames:
        raise FrameCountMismatch(f"estimate has {len(estimate)} frames, bundle has {bundle.frames}")
    skeleton, truth = bundle.skeleton, bundle.truth
    confidence = bundle.inputs.confidences()
    if truth is not None:
        annotations, annotated = truth.annotations, truth.annotated
    else:
        annotations, annotated = bundle.inputs.positions(), confidence > 0.0

    joints_cam = estimate.joints_camera(skeleton)
    predicted, in_front = project_points(bundle.inputs.intrinsics, joints_cam)
    annotated = annotated & in_front
    report = MetricsReport(run)
    report.pje_u = _or_nan(pje, predicted, annotations, annotated, uniform_frames(bundle.frames, uniform_stride))
    partial = partial_frames(confidence, partial_fraction)
    if len(partial):
        report.pje_p = _or_nan(pje, predicted, annotations, annotated, partial)

    height = body_height(skeleton, estimate.states[0].shape)
    report.smoothness = smoothness(estimate.joints_world(skeleton), estimate.scale, height)

    if bundle.inputs.scene is not None:
        index = index or build_index(bundle.inputs.scene)
        report.contact_distance = contact_distance(estimate.contact_points_world(skeleton, contact_groups), index)
        if truth is not None:
            report.contact_distance_stance = contact_distance(
                estimate.contact_points_world(skeleton, None), index, mask=truth.stance
            )

    if truth is not None:
        report.scale_rel_error = scale_rel_error(estimate.scale, truth.scale)
        true_joints, _ = posed_sequence(skeleton, truth.states)
        detected = confidence > 0.0
        report.joint3d_error_visible = _or_nan(joint3d_error, joints_cam, true_joints, detected)
        report.joint3d_error_occluded = _or_nan(joint3d_error, joints_cam, true_joints, ~detected)
    return report


def write_csv(path: PathType, reports: Sequence[MetricsReport]):
    with open(path, "w", encoding="utf-8", newline="") as file_handler:
        writer = csv.writer(file_handler, lineterminator="\n")
        writer.writerow(COLUMNS)
        for report in reports:
            row = report.to_dict()
            writer.writerow(["" if row[column] is None else (repr(row[column]) if isinstance(row[column], float) else row[column]) for column in COLUMNS])


def write_json(path: PathType, reports: Sequence[MetricsReport], provenance: Optional[Dict] = None):
    document = {"metrics": [report.to_dict() for report in reports]}
    if provenance:
        document["provenance"] = provenance
    with open(path, "w", encoding="utf-8", newline="\n") as file_handler:
        json.dump(document, file_handler, indent=2)
        file_handler.write("\n")


def read_csv(path: PathType) -> List[MetricsReport]:
    with open(path, encoding="utf-8", newline="") as file_handler:
        rows = list(csv.DictReader(file_handler))
    return [
        MetricsReport(
            row["run"], **{column: (float(row[column]) if row[column] else NAN) for column in COLUMNS[1:]}
        )
        for row in rows
    ]

