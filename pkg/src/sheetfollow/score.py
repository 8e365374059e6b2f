"""Symbolic pieces and their deterministic one-staff strip rendering.

A piece is rendered onto a single unrolled horizontal strip: 40 px tall,
5 staff lines at y in {8, 14, 20, 26, 32}, one filled notehead per note
at x = 20 + 25*i. Position on the strip encodes note order; timing lives
in the Alignment built by the synthesizer. The matcher looks at 200 px
wide windows of this strip, quantised into 40 bins of 5 px.
"""

from dataclasses import dataclass
import json
import math

import numpy as np

from .errors import FormatError, SheetFollowError

STRIP_HEIGHT = 40
STAFF_LINE_YS = (8, 14, 20, 26, 32)
NOTE_SPACING = 25
FIRST_ANCHOR_X = 20
WINDOW_WIDTH = 200
NUM_BINS = 40
BIN_WIDTH = 5

# natural pitch class -> diatonic degree (C..B -> 0..6)
_DEGREE = {0: 0, 2: 1, 4: 2, 5: 3, 7: 4, 9: 5, 11: 6}
_SHARP_CLASSES = {1, 3, 6, 8, 10}


def round_half_away(x: float) -> int:
    """Round to nearest integer, ties away from zero (the package-wide rule)."""
    return int(math.floor(x + 0.5)) if x >= 0 else int(math.ceil(x - 0.5))


@dataclass(frozen=True)
class NoteEvent:
    pitch: int            # MIDI number
    onset_beats: float
    duration_beats: float

    def __post_init__(self):
        if not (36 <= self.pitch <= 96):
            raise SheetFollowError(f"pitch {self.pitch} outside MIDI 36..96")
        if self.onset_beats < 0:
            raise SheetFollowError(f"negative onset {self.onset_beats}")
        if self.duration_beats <= 0:
            raise SheetFollowError(f"non-positive duration {self.duration_beats}")


@dataclass(frozen=True)
class Piece:
    name: str
    bpm: float
    notes: tuple[NoteEvent, ...]

    def __post_init__(self):
        if self.bpm <= 0:
            raise SheetFollowError(f"bpm must be positive, got {self.bpm}")
        if len(self.notes) < 2:
            raise SheetFollowError("a piece needs at least 2 notes")
        for a, b in zip(self.notes, self.notes[1:]):
            if b.onset_beats <= a.onset_beats:
                raise SheetFollowError("onsets must be strictly increasing")
            if a.onset_beats + a.duration_beats > b.onset_beats + 1e-9:
                raise SheetFollowError("notes must not overlap")


@dataclass(frozen=True)
class StaffStrip:
    pixels: np.ndarray   # (40, W) uint8, 255 = paper, 0 = ink

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class SheetWindow:
    pixels: np.ndarray   # (40, 200) uint8
    origin_x: int        # multiple of 5, may be negative


def load_piece(path) -> Piece:
    try:
        with open(path) as fh:
            doc = json.load(fh)
        notes = tuple(NoteEvent(pitch=int(n["pitch"]),
                                onset_beats=float(n["onset"]),
                                duration_beats=float(n["duration"]))
                      for n in doc["notes"])
        return Piece(name=str(doc["name"]), bpm=float(doc["bpm"]), notes=notes)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: not a valid piece file ({exc})") from exc


def save_piece(path, piece: Piece) -> None:
    doc = {"name": piece.name, "bpm": piece.bpm,
           "notes": [{"pitch": n.pitch, "onset": n.onset_beats,
                      "duration": n.duration_beats} for n in piece.notes]}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def notehead_y(pitch: int) -> int:
    """Vertical center of the notehead: 20 - 3*steps from middle-line B4.

    steps = 7*(octave-4) + (degree-6), with sharps drawn on the natural
    below plus a marker. Middle line y=20 is B4 (MIDI 71).
    """
    pc = pitch % 12
    if pc in _SHARP_CLASSES:
        pc -= 1
        pitch -= 1
    octave = pitch // 12 - 1
    steps = 7 * (octave - 4) + (_DEGREE[pc] - 6)
    return 20 - 3 * steps


def is_sharp(pitch: int) -> bool:
    return pitch % 12 in _SHARP_CLASSES


def render_strip(piece: Piece) -> tuple[StaffStrip, np.ndarray]:
    """Render the strip and return it with the per-note anchor x array.

    Noteheads are filled 5x4 blocks centered at (x_i, y(pitch)); sharps
    get a 2x2 marker 4 px left of the head; ledger lines are drawn
    through heads beyond the staff. Pitches must land fully inside the
    40 px strip (y in [2, 38], i.e. C4..A5 naturals and their sharps).
    """
    n = len(piece.notes)
    width = NOTE_SPACING * n + 15
    img = np.full((STRIP_HEIGHT, width), 255, dtype=np.uint8)
    for y in STAFF_LINE_YS:
        img[y, :] = 0

    anchors = np.array([FIRST_ANCHOR_X + NOTE_SPACING * i for i in range(n)],
                       dtype=np.int64)
    for note, x in zip(piece.notes, anchors):
        y = notehead_y(note.pitch)
        if not (2 <= y <= 38):
            raise SheetFollowError(
                f"pitch {note.pitch} maps to y={y}, outside the drawable strip")
        img[y - 2:y + 2, x - 2:x + 3] = 0
        if is_sharp(note.pitch):
            img[y - 1:y + 1, x - 5:x - 3] = 0
        if y <= STAFF_LINE_YS[0] - 6:     # ledger line above (A5 and up)
            img[2, x - 4:x + 5] = 0
        elif y >= STAFF_LINE_YS[-1] + 6:  # ledger line below (middle C)
            img[38, x - 4:x + 5] = 0
    return StaffStrip(pixels=img), anchors


def sheet_window(strip: StaffStrip, center_x: float) -> SheetWindow:
    """Extract the 200 px window centered at center_x (snapped to 5 px).

    Columns outside the strip are white, so out-of-range centers just
    produce mostly-blank windows.
    """
    origin = round_half_away(center_x / BIN_WIDTH) * BIN_WIDTH - WINDOW_WIDTH // 2
    out = np.full((STRIP_HEIGHT, WINDOW_WIDTH), 255, dtype=np.uint8)
    lo = max(origin, 0)
    hi = min(origin + WINDOW_WIDTH, strip.width)
    if hi > lo:
        out[:, lo - origin:hi - origin] = strip.pixels[:, lo:hi]
    return SheetWindow(pixels=out, origin_x=origin)


def bin_of_x(origin_x: int, x: float) -> int | None:
    """Window bin containing pixel x, or None when outside the 40 bins."""
    b = math.floor((x - origin_x) / BIN_WIDTH)
    return b if 0 <= b < NUM_BINS else None


def bin_center_x(origin_x: int, b: int) -> float:
    return origin_x + BIN_WIDTH * b + BIN_WIDTH / 2


def save_pgm(path, image: np.ndarray) -> None:
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(image.astype(np.uint8).tobytes())


def load_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    # header: magic, width, height, maxval as whitespace-separated tokens
    tokens, pos = [], 0
    while len(tokens) < 4 and pos < len(data):
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if len(tokens) != 4 or tokens[0] != b"P5" or tokens[3] != b"255":
        raise FormatError(f"{path}: not a maxval-255 binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    pos += 1  # single whitespace after maxval
    body = data[pos:pos + w * h]
    if len(body) != w * h:
        raise FormatError(f"{path}: truncated PGM body")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()
