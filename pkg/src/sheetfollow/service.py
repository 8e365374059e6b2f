"""FastAPI service: static UI, piece metadata over HTTP, live sessions
over a websocket.

One active session per connection. The client sends JSON control
messages ({"cmd": "list_pieces" | "start" | "stop" | "set_tempo"}) and
receives TrackEvents as JSON text plus type-tagged service replies
("pieces", "started", "stopped", "summary", "error"). A session runs in
a worker thread feeding a bounded queue; a client that falls more than
60 events behind is disconnected with an overflow error.
"""

import asyncio
import base64
import json
import queue
import threading
import time
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, ValidationError

from .audio import AudioConfig, FrameRing, StreamingFrontend, build_filterbank
from .corpus import load_corpus
from .net import load_params
from .session import estimate_to_event
from .synth import StreamingSynth
from .tracker import ScoreTracker, TrackerConfig

QUEUE_LIMIT = 60


class StartCommand(BaseModel):
    piece: str
    tempo: float = 1.0
    smooth: bool = True
    source: str = "synth"
    pacing: str = "realtime"


class SetTempoCommand(BaseModel):
    tempo: float


class PieceSummary(BaseModel):
    name: str
    bpm: float
    num_notes: int
    width: int


class StripPayload(BaseModel):
    name: str
    width: int
    height: int
    pixels_b64: str
    anchors: list[int]


class SessionWorker(threading.Thread):
    """Synthesize, track, and enqueue events until told to stop."""

    def __init__(self, artifacts, params, filterbank, cmd: StartCommand,
                 out: "queue.Queue", audio_cfg: AudioConfig):
        super().__init__(daemon=True)
        self.artifacts = artifacts
        self.params = params
        self.filterbank = filterbank
        self.cmd = cmd
        self.out = out
        self.audio_cfg = audio_cfg
        self.stop_event = threading.Event()
        self.tempo_box: list[float] = []
        self.tempo_lock = threading.Lock()
        self.overflow = False

    def set_tempo(self, factor: float):
        with self.tempo_lock:
            self.tempo_box.append(factor)

    def _emit(self, item: dict) -> bool:
        # realtime: a client that cannot keep 15 events/s is cut off.
        # fast mode outruns any client by design, so give the consumer a
        # grace period before declaring overflow.
        try:
            if self.cmd.pacing == "realtime":
                self.out.put_nowait(item)
            else:
                self.out.put(item, timeout=5.0)
            return True
        except queue.Full:
            self.overflow = True
            return False

    def run(self):
        try:
            self._run()
        except Exception as exc:  # pragma: no cover - defensive
            self._emit({"type": "error", "error": str(exc)})

    def _run(self):
        synth = StreamingSynth(self.artifacts.piece, self.cmd.tempo, self.audio_cfg)
        frontend = StreamingFrontend(self.audio_cfg, self.filterbank)
        ring = FrameRing(self.filterbank.num_filters)
        tracker = ScoreTracker(self.artifacts.strip, self.artifacts.anchors,
                               self.params,
                               TrackerConfig(use_smoother=self.cmd.smooth))
        realtime = self.cmd.pacing == "realtime"
        wall_start = time.perf_counter()
        frames_done = 0
        lost = 0
        while not self.stop_event.is_set():
            with self.tempo_lock:
                if self.tempo_box:
                    synth.set_tempo(self.tempo_box[-1])
                    self.tempo_box.clear()
            chunk = synth.chunk()
            if chunk is None:
                self._emit({"type": "summary", "frames": frames_done,
                            "lost_frames": lost})
                return
            for frame in frontend.process_block(chunk):
                ring.push(frame)
                est = tracker.step(ring.latest_excerpt())
                frames_done += 1
                lost += est.lost
                if realtime:
                    target = wall_start + (est.frame_index + 1) / self.audio_cfg.frame_rate_hz
                    delay = target - time.perf_counter()
                    if delay > 0:
                        time.sleep(delay)
                if not self._emit(estimate_to_event(est)):
                    return
                if self.stop_event.is_set():
                    break
        self._emit({"type": "stopped", "frames": frames_done})


class Connection:
    """Per-websocket state: at most one running worker."""

    def __init__(self, state):
        self.state = state
        self.queue: queue.Queue = queue.Queue(maxsize=QUEUE_LIMIT)
        self.worker: SessionWorker | None = None

    def handle(self, text: str) -> dict | None:
        try:
            msg = json.loads(text)
            cmd = msg.get("cmd")
        except (json.JSONDecodeError, AttributeError):
            return {"type": "error", "error": "malformed message"}
        if cmd == "list_pieces":
            return {"type": "pieces",
                    "pieces": [a.piece.name for a in self.state.corpus]}
        if cmd == "start":
            try:
                start = StartCommand(**{k: v for k, v in msg.items() if k != "cmd"})
            except ValidationError as exc:
                return {"type": "error", "error": f"bad start command: {exc.errors()}"}
            if start.source == "live":
                return {"type": "error",
                        "error": "live capture is not built into this service"}
            if not (0.5 <= start.tempo <= 2.0):
                return {"type": "error",
                        "error": f"tempo {start.tempo} outside [0.5, 2.0]"}
            art = self.state.by_name.get(start.piece)
            if art is None:
                return {"type": "error", "error": f"unknown piece {start.piece!r}"}
            self.stop_worker()
            self.worker = SessionWorker(art, self.state.params, self.state.filterbank,
                                        start, self.queue, self.state.audio_cfg)
            self.worker.start()
            return {"type": "started", "piece": start.piece, "tempo": start.tempo,
                    "smooth": start.smooth}
        if cmd == "stop":
            if self.worker is None or not self.worker.is_alive():
                return {"type": "error", "error": "no session running"}
            self.stop_worker(join=False)
            return None  # terminal "stopped" arrives through the stream
        if cmd == "set_tempo":
            try:
                st = SetTempoCommand(tempo=msg.get("tempo"))
            except ValidationError:
                return {"type": "error", "error": "set_tempo needs a numeric tempo"}
            if self.worker is None or not self.worker.is_alive():
                return {"type": "error", "error": "no session running"}
            self.worker.set_tempo(st.tempo)
            return {"type": "tempo_set", "tempo": st.tempo}
        return {"type": "error", "error": f"unknown command {cmd!r}"}

    def stop_worker(self, join: bool = True):
        if self.worker is not None:
            self.worker.stop_event.set()
            if join:
                self.worker.join(timeout=5.0)
                self.worker = None

    @property
    def overflowed(self) -> bool:
        return self.worker is not None and self.worker.overflow


class ServiceState:
    def __init__(self, params, corpus, audio_cfg=None):
        self.params = params
        self.corpus = corpus
        self.by_name = {a.piece.name: a for a in corpus}
        self.audio_cfg = audio_cfg or AudioConfig()
        self.filterbank = build_filterbank(self.audio_cfg)


FALLBACK_PAGE = """<!doctype html><html><head><title>sheetfollow</title></head>
<body><h1>sheetfollow service</h1>
<p>The browser UI is not built. Build it with <code>npm run build</code> in
<code>frontend/</code> and pass <code>--ui frontend/dist</code>, or talk to the
websocket at <code>/ws</code> directly.</p></body></html>"""


def build_app(model_path=None, pieces_dir=None, ui_dir=None,
              params=None, corpus=None) -> FastAPI:
    if params is None:
        params = load_params(Path(model_path).read_bytes())
    if corpus is None:
        corpus = load_corpus(pieces_dir)
    state = ServiceState(params, corpus)
    app = FastAPI(title="sheetfollow", version="0.1.0")
    app.state.service = state

    @app.get("/api/health")
    def health():
        return {"status": "ok", "pieces": len(state.corpus)}

    @app.get("/api/pieces", response_model=list[PieceSummary])
    def pieces():
        return [PieceSummary(name=a.piece.name, bpm=a.piece.bpm,
                             num_notes=len(a.piece.notes), width=a.strip.width)
                for a in state.corpus]

    @app.get("/api/pieces/{name}/strip", response_model=StripPayload)
    def strip(name: str):
        art = state.by_name.get(name)
        if art is None:
            return JSONResponse({"error": f"unknown piece {name!r}"}, status_code=404)
        img = art.strip.pixels
        return StripPayload(name=name, width=img.shape[1], height=img.shape[0],
                            pixels_b64=base64.b64encode(img.tobytes()).decode(),
                            anchors=[int(x) for x in art.anchors])

    @app.websocket("/ws")
    async def ws(websocket: WebSocket):
        await websocket.accept()
        conn = Connection(state)

        async def pump():
            while True:
                try:
                    item = conn.queue.get_nowait()
                except queue.Empty:
                    if conn.overflowed:
                        await websocket.send_text(json.dumps(
                            {"type": "error", "error": "client overflow, closing"}))
                        await websocket.close(code=1011)
                        return
                    await asyncio.sleep(0.005)
                    continue
                await websocket.send_text(json.dumps(item))

        pump_task = asyncio.create_task(pump())
        try:
            while True:
                text = await websocket.receive_text()
                reply = conn.handle(text)
                if reply is not None:
                    await websocket.send_text(json.dumps(reply))
        except WebSocketDisconnect:
            pass
        finally:
            pump_task.cancel()
            conn.stop_worker()

    ui = Path(ui_dir) if ui_dir else None
    if ui and ui.is_dir():
        app.mount("/", StaticFiles(directory=str(ui), html=True), name="ui")
    else:
        @app.get("/")
        def index():
            return HTMLResponse(FALLBACK_PAGE)

    return app
