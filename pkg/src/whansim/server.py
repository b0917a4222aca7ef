"""Network front ends for the home server.

Two listeners share one simulation kernel.  The TCP side speaks a newline
delimited command protocol for operator clients: AUTH, SUB/UNSUB, GET, SET,
MODE, MODES, HIST, and QUIT, with OK/ERR replies and asynchronous STATE,
READING, and EVENT pushes to subscribed sessions.  The HTTP side serves the
dashboard assets, a small JSON API, a server-sent-event bridge carrying the
same pushes, and the synthetic camera feed as a multipart PPM stream.

Every mutation funnels through the kernel's request queue, so handler threads
never touch simulation state directly.  Text fields on the wire are percent
encoded, which keeps each protocol field free of whitespace.  A session that
stops reading is disconnected once its outbound backlog hits the limit.
"""

from __future__ import annotations

import http.cookies
import http.server
import json
import mimetypes
import os
import queue
import secrets
import socket
import socketserver
import threading
import time
import urllib.parse

from .auth import verify_password
from .camera import FRAME_PERIOD_S, MULTIPART_BOUNDARY, multipart_part, ppm_frame
from .sim import Simulation

MAX_LINE_BYTES = 1024
BACKLOG_LIMIT = 256
SESSION_COOKIE = "whansid"


def encode_field(text: str) -> str:
    return urllib.parse.quote(text, safe="")


def decode_field(text: str) -> str:
    return urllib.parse.unquote(text)


def format_number(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        if value == int(value) and abs(value) < 1e15:
            return str(int(value))
        return ("%.6f" % value).rstrip("0").rstrip(".")
    return str(value)


def wire_kind(kind_name: str) -> str:
    """DELIVERY_FAILED -> DeliveryFailed, the event naming used on the wire."""
    return "".join(part.capitalize() for part in kind_name.split("_"))


def format_push(kind: str, payload: dict) -> str | None:
    if kind == "reading":
        if not payload.get("device"):
            return None
        return "READING %s %s %s %s" % (
            encode_field(payload["device"]), format_number(payload["t"]),
            format_number(payload["value"]), format_number(payload["rssi"]))
    if kind == "state":
        return "STATE %s %s %s" % (
            encode_field(payload["device"]), payload["state"],
            format_number(payload["value"]))
    if kind == "event":
        device = payload.get("device") or ""
        message = payload.get("message") or ""
        detail = "%s: %s" % (device, message) if device else message
        return "EVENT %s %s" % (wire_kind(payload["kind"]), encode_field(detail))
    return None


# -- TCP line protocol -------------------------------------------------------------------


class _TcpSession:
    def __init__(self, connection: socket.socket, backlog: int) -> None:
        self.connection = connection
        self.backlog = backlog
        self.outbox: queue.Queue = queue.Queue()
        self.user: str | None = None
        self.subscriptions: set[str] = set()
        self.alive = True

    def push(self, line: str) -> bool:
        """Queue a broadcast line; a client with a full backlog is dropped."""
        if self.outbox.qsize() >= self.backlog:
            self.kill()
            return False
        self.outbox.put_nowait(line)
        return True

    def reply(self, line: str) -> bool:
        # replies may burst past the push backlog (HIST rows), but stay bounded
        if self.outbox.qsize() >= self.backlog * 64:
            self.kill()
            return False
        self.outbox.put_nowait(line)
        return True

    def kill(self) -> None:
        self.alive = False
        try:
            self.connection.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.connection.close()
        except OSError:
            pass

    def wants(self, device: str | None) -> bool:
        if "*" in self.subscriptions:
            return True
        return device is not None and device in self.subscriptions


class _ReplySink:
    """Duck-typed reply queue handed to the kernel with an RPC.

    The kernel thread formats and enqueues the reply while draining requests,
    before it publishes any pushes the request caused, so a session always
    sees its reply ahead of the resulting STATE or EVENT lines.
    """

    def __init__(self, session: _TcpSession, formatter) -> None:
        self.session = session
        self.formatter = formatter

    def put_nowait(self, result) -> None:
        try:
            for line in self.formatter(result):
                if not self.session.reply(line):
                    return
        except Exception:
            self.session.kill()


def _is_err(result) -> bool:
    return isinstance(result, tuple) and len(result) == 3 and result[0] == "err"


class TcpServer:
    """Threaded line-protocol listener; one handler thread per connection."""

    def __init__(self, sim: Simulation, host: str = "127.0.0.1", port: int = 4840,
                 backlog_limit: int = BACKLOG_LIMIT) -> None:
        self.sim = sim
        self.backlog_limit = backlog_limit
        self._sessions: list[_TcpSession] = []
        self._lock = threading.Lock()
        self._device_names = set(sim.core.devices)  # registry is fixed after boot
        outer = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self) -> None:
                outer._serve_connection(self)

        class Server(socketserver.ThreadingTCPServer):
            daemon_threads = True
            allow_reuse_address = True

        self._server = Server((host, port), Handler)
        self._thread: threading.Thread | None = None
        sim.add_listener(self._on_push)

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        kwargs={"poll_interval": 0.05}, daemon=True)
        self._thread.start()

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        with self._lock:
            sessions, self._sessions = self._sessions, []
        for session in sessions:
            session.kill()
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    # -- push fan-out ----------------------------------------------------------------

    def _on_push(self, kind: str, payload: dict) -> None:
        line = format_push(kind, payload)
        if line is None:
            return
        device = payload.get("device")
        with self._lock:
            targets = [s for s in self._sessions if s.alive and s.wants(device)]
        for session in targets:
            session.push(line)

    # -- per-connection loop ---------------------------------------------------------

    def _serve_connection(self, handler: socketserver.StreamRequestHandler) -> None:
        session = _TcpSession(handler.connection, self.backlog_limit)
        with self._lock:
            self._sessions.append(session)
        writer = threading.Thread(target=self._write_loop, args=(session,), daemon=True)
        writer.start()
        try:
            while session.alive:
                raw = handler.rfile.readline(MAX_LINE_BYTES + 1)
                if not raw:
                    break
                if len(raw) > MAX_LINE_BYTES:
                    session.reply("ERR 400")
                    break
                try:
                    line = raw.decode("utf-8").strip()
                except UnicodeDecodeError:
                    session.reply("ERR 400")
                    continue
                if not line:
                    continue
                quit_after = self._dispatch(session, line)
                if quit_after:
                    break
        finally:
            with self._lock:
                if session in self._sessions:
                    self._sessions.remove(session)
            session.alive = False
            session.outbox.put_nowait(None)  # writer flushes the queue, then exits
            writer.join(timeout=2.0)
            session.kill()

    def _write_loop(self, session: _TcpSession) -> None:
        while True:
            line = session.outbox.get()
            if line is None:
                return
            try:
                session.connection.sendall((line + "\n").encode("utf-8"))
            except OSError:
                session.alive = False
                return

    def _dispatch(self, session: _TcpSession, line: str) -> bool:
        """Handle one command line; returns True when the session should end."""
        parts = line.split()
        verb = parts[0].upper()
        args = parts[1:]
        if verb == "QUIT":
            session.reply("OK")
            return True
        if verb == "AUTH":
            self._handle_auth(session, args)
            return False
        if session.user is None:
            session.reply("ERR 401")
            return False
        outcome = self._handle_command(session, verb, args)
        if isinstance(outcome, list):
            for reply in outcome:
                session.reply(reply)
        else:
            op, rpc_args, formatter = outcome
            self.sim.submit_with(op, rpc_args, _ReplySink(session, formatter))
        return False

    def _handle_auth(self, session: _TcpSession, args: list[str]) -> None:
        if len(args) != 2:
            session.reply("ERR 400")
            return
        user = decode_field(args[0])
        password = decode_field(args[1])
        record = self.sim.store.users.get(user)
        stored = record.pw_hash if record else None
        if verify_password(password, stored):
            session.user = user
            session.reply("OK")
        else:
            self.sim.submit("auth_failure", (user,))
            session.reply("ERR 401")

    def _handle_command(self, session: _TcpSession, verb: str, args: list[str]):
        """Local commands return reply lines; kernel ones an (op, args, formatter)."""
        if verb in ("SUB", "UNSUB"):
            if len(args) != 1:
                return ["ERR 400"]
            name = decode_field(args[0])
            if name != "*" and name not in self._device_names:
                return ["ERR 404"]
            if verb == "SUB":
                session.subscriptions.add(name)
            else:
                session.subscriptions.discard(name)
            return ["OK"]
        if verb == "LIST":
            if args:
                return ["ERR 400"]
            return ("list", (), _format_list)
        if verb == "GET":
            if len(args) != 1:
                return ["ERR 400"]
            return ("get", (decode_field(args[0]),), _format_get)
        if verb == "SET":
            if len(args) != 3:
                return ["ERR 400"]
            rpc_args = tuple(decode_field(a) for a in args)
            return ("set", rpc_args, _format_set)
        if verb == "MODE":
            if len(args) != 1:
                return ["ERR 400"]
            return ("mode", (decode_field(args[0]),), _format_mode)
        if verb == "MODES":
            if args:
                return ["ERR 400"]
            return ("modes", (), _format_modes)
        if verb == "HIST":
            if len(args) != 3:
                return ["ERR 400"]
            try:
                since, until = float(args[1]), float(args[2])
            except ValueError:
                return ["ERR 400"]
            return ("hist", (decode_field(args[0]), since, until, None), _format_hist)
        return ["ERR 400"]


def _format_set(result) -> list[str]:
    if _is_err(result):
        return ["ERR %s" % result[1]]
    return ["OK %d" % result[1]]


def _format_mode(result) -> list[str]:
    if _is_err(result):
        return ["ERR %s" % result[1]]
    return ["OK"]


def _format_modes(result) -> list[str]:
    names, _current = result
    return ["MODES " + " ".join(encode_field(n) for n in names)]


def _format_list(result) -> list[str]:
    lines = ["DEVICE %s %s %s %s" % (encode_field(v["name"]), v["kind"], v["state"],
                                     format_number(v["value"]))
             for v in result]
    lines.append("OK")
    return lines


def _format_get(result) -> list[str]:
    if result is None:
        return ["ERR 404"]
    return ["STATE %s %s %s" % (encode_field(result["name"]), result["state"],
                                format_number(result["value"]))]


def _format_hist(result) -> list[str]:
    if _is_err(result):
        return ["ERR %s" % result[1]]
    lines = ["HIST-BEGIN"]
    lines.extend("HIST %s %s %s" % (format_number(t), format_number(value),
                                    format_number(rssi))
                 for t, value, rssi in result)
    lines.append("HIST-END")
    return lines


# -- HTTP API, dashboard assets, camera stream --------------------------------------------


class HttpServer:
    """JSON API plus static dashboard assets and the camera multipart stream."""

    def __init__(self, sim: Simulation, host: str = "127.0.0.1", port: int = 8080,
                 static_dir: str | None = None) -> None:
        self.sim = sim
        self.static_dir = os.path.abspath(static_dir) if static_dir else None
        self._cookie_sessions: dict[str, str] = {}
        self._lock = threading.Lock()
        self._stream_queues: list[queue.Queue] = []
        outer = self

        class Handler(http.server.BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args) -> None:
                pass

            def do_GET(self) -> None:
                outer._get(self)

            def do_POST(self) -> None:
                outer._post(self)

        class Server(http.server.ThreadingHTTPServer):
            daemon_threads = True
            allow_reuse_address = True

        self._server = Server((host, port), Handler)
        self._thread: threading.Thread | None = None
        sim.add_listener(self._on_push)

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        kwargs={"poll_interval": 0.05}, daemon=True)
        self._thread.start()

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        with self._lock:
            sinks, self._stream_queues = self._stream_queues, []
        for sink in sinks:
            try:
                sink.put_nowait(None)
            except queue.Full:
                pass
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    def _on_push(self, kind: str, payload: dict) -> None:
        with self._lock:
            sinks = list(self._stream_queues)
        if not sinks:
            return
        record = dict(payload)
        record["push"] = kind
        if kind == "event":
            record["kind"] = wire_kind(record["kind"])
        data = json.dumps(record)
        for sink in sinks:
            try:
                sink.put_nowait(data)
            except queue.Full:
                with self._lock:
                    if sink in self._stream_queues:
                        self._stream_queues.remove(sink)

    # -- plumbing ----------------------------------------------------------------------

    def _send_json(self, handler, status: int, body) -> None:
        blob = json.dumps(body).encode("utf-8")
        handler.send_response(status)
        handler.send_header("Content-Type", "application/json")
        handler.send_header("Content-Length", str(len(blob)))
        handler.end_headers()
        handler.wfile.write(blob)

    def _read_json(self, handler) -> dict | None:
        try:
            length = int(handler.headers.get("Content-Length", "0"))
            body = json.loads(handler.rfile.read(length) or b"{}")
        except (ValueError, json.JSONDecodeError):
            return None
        return body if isinstance(body, dict) else None

    def _session_user(self, handler) -> str | None:
        cookie = http.cookies.SimpleCookie(handler.headers.get("Cookie", ""))
        token = cookie[SESSION_COOKIE].value if SESSION_COOKIE in cookie else None
        with self._lock:
            return self._cookie_sessions.get(token) if token else None

    # -- GET ---------------------------------------------------------------------------

    def _get(self, handler) -> None:
        parsed = urllib.parse.urlparse(handler.path)
        params = urllib.parse.parse_qs(parsed.query)
        route = parsed.path
        if route == "/api/devices":
            self._send_json(handler, 200, self.sim.submit("list"))
        elif route == "/api/history":
            self._get_history(handler, params)
        elif route == "/api/events":
            since = float(params.get("since", ["0"])[0])
            rows = self.sim.submit("events", (since, None))
            self._send_json(handler, 200, [
                {"t": t, "kind": wire_kind(kind), "device": device,
                 "message": message, "severity": severity}
                for t, kind, device, message, severity in rows])
        elif route == "/api/modes":
            names, current = self.sim.submit("modes")
            self._send_json(handler, 200, {"modes": names, "current": current})
        elif route == "/api/status":
            self._send_json(handler, 200, self.sim.submit("status"))
        elif route == "/api/stream":
            self._stream_events(handler)
        elif route == "/camera/stream":
            self._stream_camera(handler)
        else:
            self._static(handler, route)

    def _get_history(self, handler, params: dict) -> None:
        device = params.get("device", [""])[0]
        try:
            since = float(params.get("from", ["0"])[0])
            until = float(params.get("to", ["1e18"])[0])
        except ValueError:
            self._send_json(handler, 400, {"error": "400", "message": "bad range"})
            return
        rows = self.sim.submit("hist", (device, since, until, None))
        if isinstance(rows, tuple) and rows[0] == "err":
            self._send_json(handler, int(rows[1]), {"error": rows[1], "message": rows[2]})
            return
        self._send_json(handler, 200,
                        [{"t": t, "value": value, "rssi": rssi} for t, value, rssi in rows])

    def _stream_events(self, handler) -> None:
        sink: queue.Queue = queue.Queue(maxsize=BACKLOG_LIMIT)
        with self._lock:
            self._stream_queues.append(sink)
        handler.send_response(200)
        handler.send_header("Content-Type", "text/event-stream")
        handler.send_header("Cache-Control", "no-cache")
        handler.end_headers()
        try:
            while True:
                try:
                    data = sink.get(timeout=1.0)
                except queue.Empty:
                    handler.wfile.write(b": keep-alive\n\n")
                    handler.wfile.flush()
                    continue
                if data is None:
                    return
                handler.wfile.write(("data: %s\n\n" % data).encode("utf-8"))
                handler.wfile.flush()
        except OSError:
            return
        finally:
            with self._lock:
                if sink in self._stream_queues:
                    self._stream_queues.remove(sink)

    def _stream_camera(self, handler) -> None:
        handler.send_response(200)
        handler.send_header("Content-Type",
                            "multipart/x-mixed-replace; boundary=%s" % MULTIPART_BOUNDARY)
        handler.end_headers()
        last_counter = -1
        try:
            while True:
                pan, tilt, counter = self.sim.submit("camera")
                if counter != last_counter:
                    last_counter = counter
                    handler.wfile.write(multipart_part(ppm_frame(pan, tilt, counter)))
                    handler.wfile.flush()
                time.sleep(FRAME_PERIOD_S / 10.0)
        except (OSError, queue.Empty):
            return

    def _static(self, handler, route: str) -> None:
        if self.static_dir is None:
            self._placeholder(handler, route)
            return
        name = "index.html" if route == "/" else route.lstrip("/")
        path = os.path.abspath(os.path.join(self.static_dir, name))
        if not path.startswith(self.static_dir + os.sep) or not os.path.isfile(path):
            if route == "/":
                self._placeholder(handler, route)
            else:
                self._send_json(handler, 404, {"error": "404", "message": "not found"})
            return
        content_type = mimetypes.guess_type(path)[0] or "application/octet-stream"
        with open(path, "rb") as fh:
            blob = fh.read()
        handler.send_response(200)
        handler.send_header("Content-Type", content_type)
        handler.send_header("Content-Length", str(len(blob)))
        handler.end_headers()
        handler.wfile.write(blob)

    def _placeholder(self, handler, route: str) -> None:
        if route != "/":
            self._send_json(handler, 404, {"error": "404", "message": "not found"})
            return
        blob = (b"<!doctype html><title>whansim</title>"
                b"<h1>whansim server</h1>"
                b"<p>Dashboard assets are not built. The JSON API lives under "
                b"<a href='/api/devices'>/api/devices</a>.</p>")
        handler.send_response(200)
        handler.send_header("Content-Type", "text/html; charset=utf-8")
        handler.send_header("Content-Length", str(len(blob)))
        handler.end_headers()
        handler.wfile.write(blob)

    # -- POST --------------------------------------------------------------------------

    def _post(self, handler) -> None:
        route = urllib.parse.urlparse(handler.path).path
        if route == "/api/login":
            self._post_login(handler)
        elif route == "/api/command":
            self._post_command(handler)
        else:
            self._send_json(handler, 404, {"error": "404", "message": "not found"})

    def _post_login(self, handler) -> None:
        body = self._read_json(handler)
        if body is None or "user" not in body or "password" not in body:
            self._send_json(handler, 400, {"error": "400", "message": "user and password required"})
            return
        user = str(body["user"])
        record = self.sim.store.users.get(user)
        stored = record.pw_hash if record else None
        if not verify_password(str(body["password"]), stored):
            self.sim.submit("auth_failure", (user,))
            self._send_json(handler, 401, {"error": "401", "message": "invalid credentials"})
            return
        token = secrets.token_hex(16)
        with self._lock:
            self._cookie_sessions[token] = user
        blob = json.dumps({"ok": True, "user": user}).encode("utf-8")
        handler.send_response(200)
        handler.send_header("Content-Type", "application/json")
        handler.send_header("Content-Length", str(len(blob)))
        handler.send_header("Set-Cookie", "%s=%s; HttpOnly; Path=/" % (SESSION_COOKIE, token))
        handler.end_headers()
        handler.wfile.write(blob)

    def _post_command(self, handler) -> None:
        if self._session_user(handler) is None:
            self._send_json(handler, 401, {"error": "401", "message": "login required"})
            return
        body = self._read_json(handler)
        if body is None or not {"device", "property", "value"} <= set(body):
            self._send_json(handler, 400,
                            {"error": "400", "message": "device, property, value required"})
            return
        result = self.sim.submit(
            "set", (str(body["device"]), str(body["property"]), str(body["value"])))
        if result[0] == "ok":
            self._send_json(handler, 200, {"ok": True, "ticket": result[1]})
        else:
            self._send_json(handler, int(result[1]), {"error": result[1], "message": result[2]})
