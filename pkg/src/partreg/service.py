"""Session API over HTTP for the interactive review loop.

Endpoints (all JSON unless noted):
  GET  /api/session              -> full session snapshot
  POST /api/session/command      -> {"command": "accept"|"retry"|"skip"}
  GET  /api/clouds/source        -> ASCII PLY (also: target, current)
  GET  /api/events               -> server-sent events (checkpoint/progress)
  GET  /                         -> static review UI assets when configured

One pipeline session per service; commands are serialized under a lock and
the pipeline advances between checkpoints on the calling thread. The cloud
named "current" shows accepted part placements plus a preview of the pending
candidate applied to its part.
"""

from __future__ import annotations

import json
import mimetypes
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .errors import InvalidCommand, NoPendingCheckpoint, PartRegError
from .geom import PointCloud
from .io import transform_to_rows
from .pipeline import InteractiveSession, PipelineConfig
from .report import report_document
from .scansim import Scenario

SESSION_SCHEMA = "partreg/session@1"


def _ply_bytes(cloud: PointCloud) -> bytes:
    from .io import ply_dumps

    return ply_dumps(cloud).encode("utf-8")


class SessionService:
    """Owns the interactive session, its lock, and the event subscribers."""

    def __init__(self, scenario: Scenario, cfg: PipelineConfig, static_dir: Path | str | None = None):
        self.scenario = scenario
        self.cfg = cfg
        self.session = InteractiveSession(scenario, cfg)
        self.static_dir = Path(static_dir) if static_dir else None
        self._lock = threading.Lock()
        self._subscribers: list[queue.Queue] = []
        self._sub_lock = threading.Lock()
        self._starter: threading.Thread | None = None

    # -- lifecycle -----------------------------------------------------------

    def start_pipeline_async(self) -> None:
        """Advance to the first checkpoint on a background thread."""
        if self._starter is not None:
            return

        def _run():
            with self._lock:
                self.session.start()
            self._broadcast()

        self._starter = threading.Thread(target=_run, name="partreg-session", daemon=True)
        self._starter.start()

    def wait_started(self, timeout: float = 60.0) -> None:
        if self._starter is not None:
            self._starter.join(timeout)

    # -- state ----------------------------------------------------------------

    def snapshot(self) -> dict:
        with self._lock:
            return self._snapshot_locked()

    def _snapshot_locked(self) -> dict:
        st = self.session.state
        pending = None
        if st.pending is not None:
            cp = st.pending
            pending = {
                "part_id": cp.part_id,
                "part_name": cp.part_name,
                "stage": cp.stage,
                "retry_count": cp.retry_count,
                "candidate": {
                    "fitness": cp.candidate.fitness,
                    "rmse": cp.candidate.rmse,
                    "inlier_count": cp.candidate.inlier_count,
                    "transform": transform_to_rows(cp.candidate.transform),
                },
            }
        outcomes = [
            {
                "part_id": o.part_id,
                "part_name": o.part_name,
                "stage": o.stage,
                "fitness": o.fitness,
                "rmse": o.rmse,
                "retries": dict(o.retries),
                "notes": list(o.notes),
            }
            for o in st.outcomes
        ]
        doc = {
            "schema": SESSION_SCHEMA,
            "scenario_id": st.scenario_id,
            "status": st.status,
            "step": st.step,
            "parts_total": len(self.scenario.graph.parts),
            "parts_done": len(st.outcomes),
            "pending": pending,
            "outcomes": outcomes,
            "events": st.events,
        }
        if self.session.result is not None:
            doc["metrics"] = self.session.result.metrics.as_dict()
        return doc

    def command(self, command: str) -> dict:
        with self._lock:
            self.session.command(command)
            snap = self._snapshot_locked()
        self._broadcast()
        return snap

    def report(self) -> dict | None:
        with self._lock:
            if self.session.result is None:
                return None
            return report_document(self.session.result, self.cfg, timings={})

    def cloud(self, which: str) -> PointCloud:
        if which == "source":
            return self.scenario.source
        if which == "target":
            return self.scenario.target
        if which != "current":
            raise KeyError(which)
        with self._lock:
            engine = self.session.engine
            if engine.sprime is None:
                return self.scenario.source
            pos = engine.sprime.copy()
            st = self.session.state
            if st.pending is not None:
                part = self.scenario.graph.part(st.pending.part_id)
                xf = st.pending.candidate.transform
                pos[part.point_indices] = xf.apply(pos[part.point_indices])
            return PointCloud(pos, part_ids=self.scenario.source.part_ids)

    # -- events -----------------------------------------------------------------

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=64)
        with self._sub_lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._sub_lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def _broadcast(self) -> None:
        with self._lock:
            st = self.session.state
            event = {
                "kind": "completed" if st.status == "completed" else (
                    "checkpoint" if st.pending is not None else "progress"
                ),
                "status": st.status,
                "step": st.step,
                "parts_done": len(st.outcomes),
            }
            if st.pending is not None:
                event["pending"] = {
                    "part_id": st.pending.part_id,
                    "part_name": st.pending.part_name,
                    "stage": st.pending.stage,
                    "retry_count": st.pending.retry_count,
                }
        with self._sub_lock:
            targets = list(self._subscribers)
        for q in targets:
            try:
                q.put_nowait(event)
            except queue.Full:
                pass


class _Handler(BaseHTTPRequestHandler):
    service: SessionService  # set by make_server

    # quiet the default stderr chatter
    def log_message(self, fmt, *args):  # noqa: A003
        pass

    def _send_json(self, doc: dict, status: int = 200) -> None:
        body = json.dumps(doc, sort_keys=True).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _send_bytes(self, body: bytes, content_type: str) -> None:
        self.send_response(200)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):  # noqa: N802
        path = self.path.split("?", 1)[0]
        if path == "/api/session":
            self._send_json(self.service.snapshot())
            return
        if path == "/api/report":
            doc = self.service.report()
            if doc is None:
                self._send_json({"error": "session not completed"}, status=409)
            else:
                self._send_json(doc)
            return
        if path.startswith("/api/clouds/"):
            which = path.rsplit("/", 1)[-1]
            try:
                cloud = self.service.cloud(which)
            except KeyError:
                self._send_json({"error": f"unknown cloud {which!r}"}, status=404)
                return
            self._send_bytes(_ply_bytes(cloud), "text/plain; charset=utf-8")
            return
        if path == "/api/events":
            self._stream_events()
            return
        self._serve_static(path)

    def do_POST(self):  # noqa: N802
        path = self.path.split("?", 1)[0]
        if path != "/api/session/command":
            self._send_json({"error": "not found"}, status=404)
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            body = json.loads(self.rfile.read(length) or b"{}")
            command = body.get("command")
            if not isinstance(command, str):
                raise InvalidCommand("body must be {'command': <accept|retry|skip>}")
            snap = self.service.command(command)
        except NoPendingCheckpoint as exc:
            self._send_json({"error": str(exc)}, status=409)
        except (InvalidCommand, json.JSONDecodeError) as exc:
            self._send_json({"error": str(exc)}, status=400)
        except PartRegError as exc:
            self._send_json({"error": str(exc)}, status=500)
        else:
            self._send_json(snap)

    def _stream_events(self) -> None:
        q = self.service.subscribe()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            # initial state so late subscribers sync immediately
            first = {"kind": "hello", **{k: self.service.snapshot()[k] for k in ("status", "step")}}
            self.wfile.write(f"data: {json.dumps(first, sort_keys=True)}\n\n".encode())
            self.wfile.flush()
            while True:
                try:
                    event = q.get(timeout=15.0)
                except queue.Empty:
                    self.wfile.write(b": keepalive\n\n")
                    self.wfile.flush()
                    continue
                self.wfile.write(f"data: {json.dumps(event, sort_keys=True)}\n\n".encode())
                self.wfile.flush()
                if event.get("kind") == "completed":
                    break
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self.service.unsubscribe(q)

    def _serve_static(self, path: str) -> None:
        root = self.service.static_dir
        if root is None:
            self._send_json({"error": "no static assets configured"}, status=404)
            return
        rel = "index.html" if path in ("", "/") else path.lstrip("/")
        target = (root / rel).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            self._send_json({"error": "not found"}, status=404)
            return
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        self._send_bytes(target.read_bytes(), ctype)


def make_server(
    service: SessionService, host: str = "127.0.0.1", port: int = 0
) -> ThreadingHTTPServer:
    """Bind a threading HTTP server to the service (port 0 picks a free one)."""
    handler = type("BoundHandler", (_Handler,), {"service": service})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


def serve_forever(service: SessionService, host: str, port: int) -> None:
    server = make_server(service, host, port)
    service.start_pipeline_async()
    addr = server.server_address
    print(f"partreg session service listening on http://{addr[0]}:{addr[1]}/")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
