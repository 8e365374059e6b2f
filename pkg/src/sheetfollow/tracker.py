"""The stateful follower.

Each frame: window the strip at the previously detected position, ask
the matcher for a 40-bin distribution, take the argmax as the raw
position, optionally push the projected distribution through the online
warper, and recenter on the result. Besides the center (and the warper's
frontier) the tracker keeps no history of the tracking process; the
confidence counters only gate the lost flag.

Lost handling: confidence below the threshold for lost_patience
consecutive frames freezes the position; the first frame at or above the
threshold clears the flag and resumes updates.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError
from .net import ModelParams, forward
from .oltw import OltwConfig, OnlineWarper, num_global_bins, project_distribution
from .score import BIN_WIDTH, SheetWindow, StaffStrip, bin_center_x, sheet_window


@dataclass(frozen=True)
class TrackerConfig:
    conf_threshold: float = 0.5
    lost_patience: int = 10
    use_smoother: bool = True
    oltw: OltwConfig = field(default_factory=OltwConfig)

    def __post_init__(self):
        if not (0.0 < self.conf_threshold < 1.0):
            raise ContractViolationError("conf_threshold must be in (0, 1)")
        if self.lost_patience < 1:
            raise ContractViolationError("lost_patience must be >= 1")


@dataclass(frozen=True)
class PositionEstimate:
    frame_index: int
    origin_x: int
    distribution: np.ndarray
    raw_bin: int
    raw_x: float
    smooth_x: float
    confidence: float
    lost: bool


def make_model_matcher(params: ModelParams):
    def matcher(frames: np.ndarray, window: SheetWindow, frame_index: int):
        return forward(params, frames, window)
    return matcher


class ScoreTracker:
    """One per session; step() is strictly sequential."""

    def __init__(self, strip: StaffStrip, anchors: np.ndarray, model,
                 cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        self.strip = strip
        self.matcher = model if callable(model) else make_model_matcher(model)
        self.center_x = float(anchors[0])
        self.low_conf_run = 0
        self.lost = False
        self.frame_count = 0
        self.num_bins = num_global_bins(strip.width)
        self.warper = None
        if self.cfg.use_smoother:
            start_bin = int(anchors[0]) // BIN_WIDTH
            self.warper = OnlineWarper(self.num_bins, start_bin, self.cfg.oltw)

    def step(self, excerpt) -> PositionEstimate:
        entry_lost = self.lost
        window = sheet_window(self.strip, self.center_x)
        frames = excerpt.frames if hasattr(excerpt, "frames") else np.asarray(excerpt)
        dist = np.asarray(self.matcher(frames, window, self.frame_count), dtype=np.float64)
        raw_bin = int(np.argmax(dist))  # lowest bin wins exact ties
        raw_x = bin_center_x(window.origin_x, raw_bin)
        confidence = float(dist[raw_bin])

        # only the recentering freezes while lost; the smoother keeps
        # consuming distributions so recovery resumes from fresh evidence
        frozen = entry_lost and confidence < self.cfg.conf_threshold
        if self.warper is not None:
            q = project_distribution(dist, window.origin_x, self.num_bins)
            self.warper.push(q)
            smooth_x = self.warper.smooth_x
        else:
            smooth_x = raw_x
        if not frozen:
            self.center_x = smooth_x if self.warper is not None else raw_x

        if confidence < self.cfg.conf_threshold:
            self.low_conf_run += 1
        else:
            self.low_conf_run = 0
        self.lost = self.low_conf_run >= self.cfg.lost_patience

        est = PositionEstimate(frame_index=self.frame_count,
                               origin_x=window.origin_x,
                               distribution=dist,
                               raw_bin=raw_bin,
                               raw_x=raw_x,
                               smooth_x=smooth_x,
                               confidence=confidence,
                               lost=self.lost)
        self.frame_count += 1
        return est
