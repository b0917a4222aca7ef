"""Command line entry points: the server daemon and the operator client.

`whan server` boots the whole stack in one process: store, simulated radio
network, bridge, rule engine, and the TCP and HTTP listeners.  With --step N
it instead advances the kernel N ticks headless and exits, which gives fully
deterministic runs for scripted comparisons.  `whan ctl` speaks the TCP line
protocol for one-shot reads and commands or a streaming watch.  `whan report`
renders measurement sweeps as CSV plus PNG figures.

Settings resolve in precedence order: command line flag, then a WHAN_
environment variable, then a --config file entry, then the built-in default.
"""

from __future__ import annotations

import argparse
import os
import signal
import socket
import sys
import threading

from . import report
from .scenario import ScenarioError, load_scenario
from .server import HttpServer, TcpServer, decode_field, encode_field
from .sim import Simulation

DEFAULTS = {
    "scenario": "demo",
    "db_path": "whan-db",
    "host": "127.0.0.1",
    "tcp_port": 4840,
    "http_port": 8080,
    "speed": 1.0,
    "seed": None,
    "rssi_log": None,
    "static_dir": None,
    "step": None,
}
INT_KEYS = ("tcp_port", "http_port", "seed", "step")
FLOAT_KEYS = ("speed",)


class SettingsError(Exception):
    pass


def _coerce(key: str, value, origin: str):
    if value is None or not isinstance(value, str):
        return value
    try:
        if key in INT_KEYS:
            return int(value)
        if key in FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise SettingsError("%s: %s must be a number, got %r" % (origin, key, value))
    return value


def parse_config_file(path: str) -> dict:
    """key = value lines with # or ; comments; keys match the flag names."""
    out: dict = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as err:
        raise SettingsError("cannot read config %s: %s" % (path, err.strerror))
    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SettingsError("%s:%d: expected key = value" % (path, line_no))
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in DEFAULTS:
            raise SettingsError("%s:%d: unknown setting %r" % (path, line_no, key))
        out[key] = _coerce(key, value.strip(), "%s:%d" % (path, line_no))
    return out


def resolve_settings(args: argparse.Namespace, environ: dict | None = None) -> dict:
    environ = os.environ if environ is None else environ
    config_path = getattr(args, "config", None) or environ.get("WHAN_CONFIG")
    from_file = parse_config_file(config_path) if config_path else {}
    settings = dict(DEFAULTS)
    settings.update(from_file)
    for key in DEFAULTS:
        env_value = environ.get("WHAN_" + key.upper())
        if env_value is not None:
            settings[key] = _coerce(key, env_value, "environment")
    for key in DEFAULTS:
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            settings[key] = cli_value
    return settings


# -- whan server -------------------------------------------------------------------------


def server_main(args: argparse.Namespace) -> int:
    try:
        settings = resolve_settings(args)
    except SettingsError as err:
        print(str(err), file=sys.stderr)
        return 2
    try:
        scenario = load_scenario(settings["scenario"])
    except ScenarioError as err:
        print(str(err), file=sys.stderr)
        return 2
    except FileNotFoundError:
        print("scenario not found: %s" % settings["scenario"], file=sys.stderr)
        return 2
    sim = Simulation(scenario, settings["db_path"], seed=settings["seed"],
                     rssi_log=settings["rssi_log"])
    if settings["step"] is not None:
        sim.step(settings["step"])
        sim.store.flush()
        sim.close()
        print("ran %d ticks (%.1f s simulated), db at %s"
              % (settings["step"], sim.sim_time, settings["db_path"]))
        return 0
    try:
        tcp = TcpServer(sim, host=settings["host"], port=settings["tcp_port"])
        http = HttpServer(sim, host=settings["host"], port=settings["http_port"],
                          static_dir=settings["static_dir"])
    except OSError as err:
        print("cannot bind listener: %s" % err, file=sys.stderr)
        sim.close()
        return 1
    tcp.start()
    http.start()
    stop = threading.Event()
    if threading.current_thread() is threading.main_thread():
        signal.signal(signal.SIGTERM, lambda *_: stop.set())  # flush the store on kill
    print("whan server: scenario=%s tcp=%s:%d http=%s:%d speed=x%g"
          % (settings["scenario"], settings["host"], tcp.port,
             settings["host"], http.port, settings["speed"]),
          flush=True)  # must land in redirected logs before the serve loop
    try:
        sim.run_realtime(speed=settings["speed"], stop=stop)
    except KeyboardInterrupt:
        pass
    finally:
        stop.set()
        tcp.close()
        http.close()
        sim.close()
    return 0


# -- whan ctl ----------------------------------------------------------------------------


class _Link:
    """One line-protocol connection."""

    def __init__(self, host: str, port: int, timeout: float = 10.0) -> None:
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.file = self.sock.makefile("rwb")

    def send(self, line: str) -> None:
        self.file.write((line + "\n").encode("utf-8"))
        self.file.flush()

    def recv(self) -> str | None:
        raw = self.file.readline()
        if not raw:
            return None
        return raw.decode("utf-8").rstrip("\n")

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


def _display(line: str) -> str:
    return " ".join(decode_field(token) for token in line.split())


def ctl_main(args: argparse.Namespace) -> int:
    environ = os.environ
    host = args.host or environ.get("WHAN_HOST") or DEFAULTS["host"]
    port = args.port or int(environ.get("WHAN_TCP_PORT") or DEFAULTS["tcp_port"])
    user = args.user or environ.get("WHAN_USER")
    password = args.password if args.password is not None else environ.get("WHAN_PASSWORD")
    if not user or password is None:
        print("credentials required: --user/--password or WHAN_USER/WHAN_PASSWORD",
              file=sys.stderr)
        return 2
    try:
        link = _Link(host, port)
    except OSError as err:
        print("cannot connect to %s:%d: %s" % (host, port, err), file=sys.stderr)
        return 1
    try:
        link.send("AUTH %s %s" % (encode_field(user), encode_field(password)))
        reply = link.recv()
        if reply != "OK":
            print(reply or "connection closed", file=sys.stderr)
            return 1
        return _run_action(link, args)
    except (OSError, ConnectionError) as err:
        print("connection lost: %s" % err, file=sys.stderr)
        return 1
    finally:
        link.close()


def _run_action(link: _Link, args: argparse.Namespace) -> int:
    action = args.action
    if action == "list":
        link.send("LIST")
        code = 0
        while True:
            line = link.recv()
            if line is None or line == "OK":
                break
            if line.startswith("ERR"):
                print(line)
                code = 1
                break
            print(_display(line))
        return code
    if action == "read":
        return _one_shot(link, "GET %s" % encode_field(args.device))
    if action == "set":
        return _one_shot(link, "SET %s %s %s" % (encode_field(args.device),
                                                 encode_field(args.property),
                                                 encode_field(args.value)))
    if action == "mode":
        return _one_shot(link, "MODE %s" % encode_field(args.name))
    if action == "hist":
        return _hist(link, args)
    if action == "watch":
        return _watch(link, args)
    raise AssertionError("unreachable action %r" % action)


def _one_shot(link: _Link, command: str) -> int:
    link.send(command)
    reply = link.recv()
    if reply is None:
        print("connection closed", file=sys.stderr)
        return 1
    print(_display(reply))
    return 1 if reply.startswith("ERR") else 0


def _hist(link: _Link, args: argparse.Namespace) -> int:
    link.send("HIST %s %s %s" % (encode_field(args.device), args.since, args.until))
    first = link.recv()
    if first != "HIST-BEGIN":
        print(first or "connection closed")
        return 1
    rows = []
    while True:
        line = link.recv()
        if line is None or line == "HIST-END":
            break
        if line.startswith("HIST "):
            rows.append(line.split()[1:])
    if args.csv:
        print("ts,value,rssi")
        for row in rows:
            print(",".join(row))
    else:
        for row in rows:
            print(" ".join(row))
    return 0


def _watch(link: _Link, args: argparse.Namespace) -> int:
    target = args.device or "*"
    link.send("SUB %s" % encode_field(target))
    reply = link.recv()
    if reply != "OK":
        print(reply or "connection closed")
        return 1
    try:
        while True:
            line = link.recv()
            if line is None:
                return 0
            print(_display(line), flush=True)
    except KeyboardInterrupt:
        return 0


# -- parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="whan", description="home automation network simulator and client")
    sub = parser.add_subparsers(dest="command", required=True)

    server_p = sub.add_parser("server", help="run the simulator and server stack")
    server_p.add_argument("--config", help="settings file of key = value lines")
    server_p.add_argument("--scenario", help="packaged scenario name or a .cfg path")
    server_p.add_argument("--db-path", dest="db_path", help="store directory")
    server_p.add_argument("--host")
    server_p.add_argument("--tcp-port", dest="tcp_port", type=int)
    server_p.add_argument("--http-port", dest="http_port", type=int)
    server_p.add_argument("--speed", type=float,
                          help="simulated seconds per wall second")
    server_p.add_argument("--seed", type=int, help="fix all randomness")
    server_p.add_argument("--rssi-log", dest="rssi_log",
                          help="CSV file recording every radio transmission")
    server_p.add_argument("--static-dir", dest="static_dir",
                          help="built dashboard assets to serve at /")
    server_p.add_argument("--step", type=int,
                          help="advance N ticks with no listeners, then exit")

    ctl_p = sub.add_parser("ctl", help="talk to a running server")
    ctl_p.add_argument("--host")
    ctl_p.add_argument("--port", type=int)
    ctl_p.add_argument("--user")
    ctl_p.add_argument("--password")
    actions = ctl_p.add_subparsers(dest="action", required=True)
    actions.add_parser("list", help="all devices with state")
    read_p = actions.add_parser("read", help="current state of one device")
    read_p.add_argument("device")
    set_p = actions.add_parser("set", help="command a device property")
    set_p.add_argument("device")
    set_p.add_argument("property")
    set_p.add_argument("value")
    mode_p = actions.add_parser("mode", help="apply a mode")
    mode_p.add_argument("name")
    watch_p = actions.add_parser("watch", help="stream pushes until interrupted")
    watch_p.add_argument("device", nargs="?")
    hist_p = actions.add_parser("hist", help="stored samples for a device")
    hist_p.add_argument("device")
    hist_p.add_argument("since")
    hist_p.add_argument("until")
    hist_p.add_argument("--csv", action="store_true")

    report_p = sub.add_parser("report", help="render measurement sweeps to CSV and PNG")
    report.configure_parser(report_p)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "server":
        return server_main(args)
    if args.command == "ctl":
        return ctl_main(args)
    return report.run(args)


if __name__ == "__main__":
    sys.exit(main())
