import numpy as np
import pytest

from sheetfollow.errors import FormatError, SheetFollowError
from sheetfollow.score import (NoteEvent, Piece, bin_center_x, bin_of_x,
                               load_pgm, load_piece, notehead_y, render_strip,
                               round_half_away, save_pgm, save_piece,
                               sheet_window)


def mk_piece(pitches, name="t"):
    notes = tuple(NoteEvent(pitch=p, onset_beats=float(i), duration_beats=1.0)
                  for i, p in enumerate(pitches))
    return Piece(name=name, bpm=120.0, notes=notes)


def test_note_validation():
    with pytest.raises(SheetFollowError):
        NoteEvent(pitch=30, onset_beats=0, duration_beats=1)
    with pytest.raises(SheetFollowError):
        NoteEvent(pitch=60, onset_beats=0, duration_beats=0)


def test_piece_validation():
    with pytest.raises(SheetFollowError):
        mk_piece([60])  # too short
    with pytest.raises(SheetFollowError):
        Piece(name="x", bpm=100, notes=(
            NoteEvent(60, 0.0, 2.0), NoteEvent(62, 1.0, 1.0)))  # overlap


def test_notehead_y_reference_points():
    assert notehead_y(71) == 20   # B4 on the middle line
    assert notehead_y(64) == 32   # E4 on the bottom line
    assert notehead_y(60) == 38   # middle C below the staff
    assert notehead_y(81) == 2    # A5 above the staff
    assert notehead_y(66) == notehead_y(65)  # F#4 drawn on the F4 position


def test_render_geometry():
    strip, anchors = render_strip(mk_piece([60, 64, 67]))
    assert strip.width == 90
    assert list(anchors) == [20, 45, 70]
    assert strip.pixels.shape == (40, 90)
    for y in (8, 14, 20, 26, 32):
        assert np.all(strip.pixels[y] == 0)


def test_render_deterministic():
    a, _ = render_strip(mk_piece([60, 62, 64, 65]))
    b, _ = render_strip(mk_piece([60, 62, 64, 65]))
    assert np.array_equal(a.pixels, b.pixels)


def test_noteheads_inside_bounds_and_centered():
    piece = mk_piece([60, 66, 71, 78, 81])
    strip, anchors = render_strip(piece)
    for note, x in zip(piece.notes, anchors):
        y = notehead_y(note.pitch)
        block = strip.pixels[y - 2:y + 2, x - 2:x + 3]
        assert block.shape == (4, 5)
        assert np.all(block == 0)


def test_sharp_marker_present():
    # F#4 and F4 draw at the same height; only the sharp gets the marker
    strip, anchors = render_strip(mk_piece([66, 65]))
    y = notehead_y(66)
    assert np.all(strip.pixels[y - 1:y + 1, anchors[0] - 5:anchors[0] - 3] == 0)
    assert np.all(strip.pixels[y - 1:y + 1, anchors[1] - 5:anchors[1] - 3] == 255)


def test_out_of_range_pitch_rejected():
    with pytest.raises(SheetFollowError):
        render_strip(mk_piece([40, 41]))


def test_window_formula():
    strip, _ = render_strip(mk_piece([60] * 20))  # W = 515
    w = sheet_window(strip, 300.0)
    assert w.origin_x == 200
    assert w.pixels.shape == (40, 200)
    assert np.array_equal(w.pixels, strip.pixels[:, 200:400])


def test_window_left_padding():
    strip, _ = render_strip(mk_piece([60] * 20))
    w = sheet_window(strip, 50.0)
    assert w.origin_x == -50
    assert np.all(w.pixels[:, :50] == 255)
    assert np.array_equal(w.pixels[:, 50:], strip.pixels[:, :150])


def test_window_snapping():
    strip, _ = render_strip(mk_piece([60] * 20))
    assert sheet_window(strip, 102.4).origin_x == 0
    assert sheet_window(strip, 102.6).origin_x == 5


def test_round_half_away():
    assert round_half_away(2.5) == 3
    assert round_half_away(-2.5) == -3
    assert round_half_away(2.4) == 2


def test_bins():
    assert bin_of_x(0, 0) == 0
    assert bin_of_x(0, 100) == 20
    assert bin_of_x(0, 200) is None
    assert bin_of_x(0, -1) is None
    for b in range(40):
        assert bin_of_x(35, bin_center_x(35, b)) == b


def test_bin_monotone():
    xs = np.linspace(0, 199.9, 500)
    bins = [bin_of_x(0, x) for x in xs]
    assert all(b2 >= b1 for b1, b2 in zip(bins, bins[1:]))


def test_piece_json_roundtrip(tmp_path):
    piece = mk_piece([60, 64, 67], name="roundtrip")
    path = tmp_path / "p.json"
    save_piece(path, piece)
    back = load_piece(path)
    assert back == piece


def test_piece_json_rejects_malformed(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"name": "x"}')
    with pytest.raises(FormatError):
        load_piece(path)


def test_pgm_roundtrip(tmp_path):
    strip, _ = render_strip(mk_piece([60, 72, 64]))
    path = tmp_path / "s.pgm"
    save_pgm(path, strip.pixels)
    back = load_pgm(path)
    assert np.array_equal(back, strip.pixels)
    assert path.read_bytes().startswith(b"P5\n90 40\n255\n")


def test_pgm_rejects_truncated(tmp_path):
    path = tmp_path / "t.pgm"
    path.write_bytes(b"P5\n10 10\n255\n" + b"\x00" * 50)
    with pytest.raises(FormatError):
        load_pgm(path)
