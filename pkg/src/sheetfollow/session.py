"""Session assembly: audio in, TrackEvents out, plus the eval harness.

run_session drives the whole loop: pull PCM chunks, extract frames,
build excerpts, step the tracker, and yield one event dict per frame in
the wire schema, ending with a summary record. Fast mode runs
unthrottled and is fully deterministic; realtime mode sleeps so events
come out at most 15 per second, aligned to the start of the stream.

evaluate() mirrors the demo regime: synthesize each (piece, tempo),
track it twice (smoothing on and off), and score positions against the
alignment over frames where the truth is defined.
"""

from dataclasses import dataclass
import statistics
import time

import numpy as np

from .audio import AudioConfig, FrameRing, StreamingFrontend, build_filterbank
from .dataset import PieceArtifacts
from .score import BIN_WIDTH, NUM_BINS
from .synth import make_alignment, synthesize
from .tracker import ScoreTracker, TrackerConfig

EVENT_FIELDS = ("frame", "time", "origin", "dist", "raw_bin", "raw_x",
                "smooth_x", "confidence", "lost")


@dataclass(frozen=True)
class SessionConfig:
    tracker: TrackerConfig | None = None
    pacing: str = "fast"            # "fast" | "realtime"
    chunk_samples: int = 2205

    def __post_init__(self):
        if self.pacing not in ("fast", "realtime"):
            raise ValueError(f"unknown pacing {self.pacing!r}")


def chunk_array(samples: np.ndarray, size: int):
    for start in range(0, len(samples), size):
        yield samples[start:start + size]


def estimate_to_event(est) -> dict:
    return {
        "frame": est.frame_index,
        "time": est.frame_index / 15.0,
        "origin": est.origin_x,
        "dist": [float(v) for v in est.distribution],
        "raw_bin": est.raw_bin,
        "raw_x": float(est.raw_x),
        "smooth_x": float(est.smooth_x),
        "confidence": float(est.confidence),
        "lost": bool(est.lost),
    }


def run_session(artifacts: PieceArtifacts, model, chunks,
                cfg: SessionConfig | None = None,
                audio_cfg: AudioConfig | None = None,
                filterbank=None):
    """Yield an event dict per frame, then one {"type": "summary"} dict.

    chunks is any iterable of PCM arrays; model is ModelParams or a
    matcher callable. Latencies cover frontend + matcher + smoother work
    per frame.
    """
    cfg = cfg or SessionConfig()
    audio_cfg = audio_cfg or AudioConfig()
    tracker_cfg = cfg.tracker or TrackerConfig()
    frontend = StreamingFrontend(audio_cfg, filterbank)
    ring = FrameRing(frontend.filterbank.num_filters)
    tracker = ScoreTracker(artifacts.strip, artifacts.anchors, model, tracker_cfg)

    latencies = []
    lost_frames = 0
    frames_done = 0
    wall_start = time.perf_counter()
    try:
        for chunk in chunks:
            t0 = time.perf_counter()
            frames = frontend.process_block(chunk)
            frontend_dt = time.perf_counter() - t0
            share = frontend_dt / len(frames) if frames else 0.0
            for frame in frames:
                t1 = time.perf_counter()
                ring.push(frame)
                est = tracker.step(ring.latest_excerpt())
                latencies.append(share + time.perf_counter() - t1)
                lost_frames += est.lost
                frames_done += 1
                if cfg.pacing == "realtime":
                    target = wall_start + (est.frame_index + 1) / audio_cfg.frame_rate_hz
                    delay = target - time.perf_counter()
                    if delay > 0:
                        time.sleep(delay)
                yield estimate_to_event(est)
    except Exception as exc:
        yield {"type": "error", "error": str(exc), "frames": frames_done}
        raise

    summary = {"type": "summary", "frames": frames_done, "lost_frames": lost_frames}
    if latencies:
        ms = [1e3 * v for v in latencies]
        summary["latency_ms"] = {"median": statistics.median(ms),
                                 "max": max(ms),
                                 "mean": statistics.fmean(ms)}
    yield summary


def corrupting_matcher(matcher, fraction: float, seed: int, offset_bins: int = 20):
    """Wrap a matcher so a seeded fraction of frames return a point mass
    far from the current belief (the 'big jumps' failure on demand)."""
    rng = np.random.default_rng(seed)

    def wrapped(frames, window, frame_index):
        dist = np.asarray(matcher(frames, window, frame_index), dtype=np.float64)
        if rng.random() < fraction:
            spike = np.zeros(NUM_BINS)
            spike[(int(np.argmax(dist)) + offset_bins) % NUM_BINS] = 1.0
            return spike
        return dist

    return wrapped


def oracle_matcher(alignment, frame_rate: float = 15.0):
    """A perfect matcher that reads the alignment instead of the audio."""

    def matcher(frames, window, frame_index):
        truth = float(alignment.x_at_time(frame_index / frame_rate))
        b = int(np.floor((truth - window.origin_x) / BIN_WIDTH))
        b = min(max(b, 0), NUM_BINS - 1)
        dist = np.zeros(NUM_BINS)
        dist[b] = 1.0
        return dist

    return matcher


@dataclass(frozen=True)
class VariantMetrics:
    frames: int
    mean_abs_err_px: float
    within_1_bin_pct: float
    within_2_bin_pct: float
    lost_pct: float

    def as_dict(self) -> dict:
        return {"frames": self.frames,
                "mean_abs_err_px": self.mean_abs_err_px,
                "within_1_bin_pct": self.within_1_bin_pct,
                "within_2_bin_pct": self.within_2_bin_pct,
                "lost_pct": self.lost_pct}


@dataclass(frozen=True)
class EvalRow:
    piece: str
    tempo: float
    smooth_on: VariantMetrics
    smooth_off: VariantMetrics

    def as_dict(self) -> dict:
        return {"piece": self.piece, "tempo": self.tempo,
                "smooth_on": self.smooth_on.as_dict(),
                "smooth_off": self.smooth_off.as_dict()}


def score_events(events: list[dict], alignment, use_smooth: bool) -> VariantMetrics:
    """Compare tracked positions to the alignment truth.

    Only frames whose time falls inside the alignment's span count.
    """
    errs, lost = [], 0
    for ev in events:
        t = ev["time"]
        if not (alignment.start_time <= t <= alignment.end_time):
            continue
        pos = ev["smooth_x"] if use_smooth else ev["raw_x"]
        errs.append(abs(pos - float(alignment.x_at_time(t))))
        lost += ev["lost"]
    if not errs:
        return VariantMetrics(0, 0.0, 0.0, 0.0, 0.0)
    errs = np.asarray(errs)
    return VariantMetrics(
        frames=len(errs),
        mean_abs_err_px=float(errs.mean()),
        within_1_bin_pct=float((errs <= BIN_WIDTH).mean() * 100.0),
        within_2_bin_pct=float((errs <= 2 * BIN_WIDTH).mean() * 100.0),
        lost_pct=float(lost / len(errs) * 100.0),
    )


def track_performance(artifacts: PieceArtifacts, model, samples,
                      smooth: bool, audio_cfg=None, filterbank=None) -> list[dict]:
    cfg = SessionConfig(tracker=TrackerConfig(use_smoother=smooth))
    events = list(run_session(artifacts, model, chunk_array(samples, cfg.chunk_samples),
                              cfg, audio_cfg, filterbank))
    return [e for e in events if "type" not in e]


def evaluate(model, artifact_list: list[PieceArtifacts], tempi,
             seed: int = 0, corrupt_fraction: float = 0.0,
             matcher_factory=None, audio_cfg=None) -> list[EvalRow]:
    """One EvalRow per (piece, tempo), smoothing on and off.

    matcher_factory(artifacts, alignment) may replace the model (oracle
    injection); corrupt_fraction wraps whichever matcher is in play.
    """
    audio_cfg = audio_cfg or AudioConfig()
    bank = build_filterbank(audio_cfg)
    rows = []
    for art in artifact_list:
        for tempo in tempi:
            perf = synthesize(art.piece, float(tempo), seed=seed + 1, cfg=audio_cfg)
            align = make_alignment(art.piece, float(tempo), art.anchors)
            variants = {}
            for smooth in (True, False):
                if matcher_factory is not None:
                    matcher = matcher_factory(art, align)
                else:
                    matcher = model
                if corrupt_fraction > 0.0:
                    from .tracker import make_model_matcher
                    if not callable(matcher):
                        matcher = make_model_matcher(matcher)
                    matcher = corrupting_matcher(matcher, corrupt_fraction, seed + 7)
                events = track_performance(art, matcher, perf.samples, smooth,
                                           audio_cfg, bank)
                variants[smooth] = score_events(events, align, use_smooth=smooth)
            rows.append(EvalRow(piece=art.piece.name, tempo=float(tempo),
                                smooth_on=variants[True], smooth_off=variants[False]))
    return rows
