"""Command-line entry points; thin wrappers over one library call each.

Exit codes: 0 success, 1 usage, 2 unusable artifact (missing or
malformed file), 3 runtime failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .audio import load_wav, save_wav
from .corpus import load_corpus
from .dataset import PieceArtifacts
from .errors import AudioInputError, FormatError, SheetFollowError
from .net import load_params, save_params
from .score import load_piece, render_strip, save_pgm
from .session import SessionConfig, chunk_array, evaluate, run_session
from .synth import make_alignment, save_alignment, synthesize
from .tracker import TrackerConfig
from .training import train_demo_model


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def _load_model(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read model {path}: {exc}") from exc
    return load_params(data)


def cmd_synth(args):
    piece = load_piece(args.piece)
    perf = synthesize(piece, args.tempo, seed=args.seed)
    save_wav(args.out, perf.samples)
    print(f"wrote {args.out}: {perf.samples.size} samples at tempo {args.tempo}")
    if args.alignment:
        _, anchors = render_strip(piece)
        save_alignment(args.alignment, make_alignment(piece, args.tempo, anchors))
        print(f"wrote {args.alignment}")
    return 0


def cmd_render(args):
    piece = load_piece(args.piece)
    strip, anchors = render_strip(piece)
    save_pgm(args.out, strip.pixels)
    print(f"wrote {args.out}: {strip.width}x{strip.pixels.shape[0]}")
    if args.anchors:
        with open(args.anchors, "w") as fh:
            json.dump([int(x) for x in anchors], fh)
        print(f"wrote {args.anchors}")
    return 0


def cmd_train(args):
    params, curve = train_demo_model(args.pieces, seed=args.seed,
                                     epochs=args.epochs, log=print)
    with open(args.out, "wb") as fh:
        fh.write(save_params(params))
    print(f"wrote {args.out}; final epoch loss {curve[-1]:.4f}")
    if args.curve:
        with open(args.curve, "w") as fh:
            json.dump([float(v) for v in curve], fh)
    return 0


def cmd_track(args):
    params = _load_model(args.model)
    art = PieceArtifacts.of(load_piece(args.piece))
    samples = load_wav(args.audio)
    cfg = SessionConfig(
        tracker=TrackerConfig(use_smoother=not args.no_smooth),
        pacing="realtime" if args.realtime else "fast",
        chunk_samples=1470 if args.realtime else 2205,
    )
    summary = None
    with open(args.out, "w") as fh:
        for event in run_session(art, params, chunk_array(samples, cfg.chunk_samples), cfg):
            fh.write(json.dumps(event) + "\n")
            if event.get("type") == "summary":
                summary = event
    if summary:
        lat = summary.get("latency_ms", {})
        print(f"{summary['frames']} frames, {summary['lost_frames']} lost; "
              f"latency median {lat.get('median', 0):.2f} ms, max {lat.get('max', 0):.2f} ms")
    return 0


def cmd_eval(args):
    params = _load_model(args.model)
    corpus = load_corpus(args.pieces)
    tempi = [float(v) for v in args.tempi.split(",") if v]
    if not tempi:
        raise FormatError("no tempi given")
    rows = evaluate(params, corpus, tempi, seed=args.seed)
    report = [r.as_dict() for r in rows]
    with open(args.report, "w") as fh:
        json.dump(report, fh, indent=1)
    for r in rows:
        print(f"{r.piece} @ {r.tempo}: smooth within1 {r.smooth_on.within_1_bin_pct:5.1f}% "
              f"within2 {r.smooth_on.within_2_bin_pct:5.1f}% | raw within1 "
              f"{r.smooth_off.within_1_bin_pct:5.1f}% within2 {r.smooth_off.within_2_bin_pct:5.1f}%")
    print(f"wrote {args.report}")
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import build_app

    app = build_app(model_path=args.model, pieces_dir=args.pieces, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> _Parser:
    p = _Parser(prog="sheetfollow", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="render a piece to WAV at a tempo factor")
    s.add_argument("--piece", required=True)
    s.add_argument("--tempo", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--alignment")
    s.set_defaults(fn=cmd_synth)

    s = sub.add_parser("render", help="render a piece to a strip image")
    s.add_argument("--piece", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--anchors")
    s.set_defaults(fn=cmd_render)

    s = sub.add_parser("train", help="train the matcher on a piece corpus")
    s.add_argument("--pieces", default=None, help="piece dir (default: bundled corpus)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int, default=15)
    s.add_argument("--curve", help="optional loss-curve JSON output")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("track", help="follow a WAV against a piece")
    s.add_argument("--model", required=True)
    s.add_argument("--piece", required=True)
    s.add_argument("--audio", required=True)
    s.add_argument("--no-smooth", action="store_true")
    s.add_argument("--realtime", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_track)

    s = sub.add_parser("eval", help="score tracking against alignment truth")
    s.add_argument("--model", required=True)
    s.add_argument("--pieces", default=None)
    s.add_argument("--tempi", default="0.8,1.0,1.2")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--report", required=True)
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("serve", help="run the live session service")
    s.add_argument("--model", required=True)
    s.add_argument("--pieces", default=None)
    s.add_argument("--port", type=int, default=8000)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--ui", default=None, help="static UI directory")
    s.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse exits on usage errors and --help
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.fn(args)
    except (FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AudioInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SheetFollowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except KeyboardInterrupt:
        return 3


if __name__ == "__main__":
    sys.exit(main())
