"""Settings resolution, the server entry point, and the ctl client."""

import os
import signal
import socket
import subprocess
import sys
import threading
import time

import pytest

from whansim.cli import (
    DEFAULTS,
    SettingsError,
    main,
    parse_config_file,
    resolve_settings,
)
from whansim.scenario import load_scenario
from whansim.server import TcpServer
from whansim.sim import Simulation
from whansim.store import Store


class Args:
    """Bare attribute bag standing in for a parsed namespace."""

    def __init__(self, **kw):
        for key in DEFAULTS:
            setattr(self, key, None)
        self.config = None
        for key, value in kw.items():
            setattr(self, key, value)


# -- settings ----------------------------------------------------------------------------


def test_precedence_flag_beats_env_beats_config(tmp_path):
    cfg = tmp_path / "server.cfg"
    cfg.write_text("tcp_port = 5000\nspeed = 2.5\n")
    env = {"WHAN_CONFIG": str(cfg), "WHAN_TCP_PORT": "6000"}
    settings = resolve_settings(Args(), environ=env)
    assert settings["tcp_port"] == 6000  # env over config
    assert settings["speed"] == 2.5      # config over default
    assert settings["http_port"] == 8080
    settings = resolve_settings(Args(tcp_port=7000), environ=env)
    assert settings["tcp_port"] == 7000  # flag over env


def test_config_file_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "server.cfg"
    cfg.write_text("# comment\nscenario = demo\nwhatport = 1\n")
    with pytest.raises(SettingsError, match=r"server\.cfg:3"):
        parse_config_file(str(cfg))


def test_config_file_rejects_bad_numbers(tmp_path):
    cfg = tmp_path / "server.cfg"
    cfg.write_text("tcp_port = lots\n")
    with pytest.raises(SettingsError, match="tcp_port"):
        parse_config_file(str(cfg))


def test_config_file_requires_key_value_lines(tmp_path):
    cfg = tmp_path / "server.cfg"
    cfg.write_text("just words\n")
    with pytest.raises(SettingsError, match=r"server\.cfg:1"):
        parse_config_file(str(cfg))


def test_env_numbers_are_coerced():
    settings = resolve_settings(Args(), environ={"WHAN_SEED": "42", "WHAN_SPEED": "8"})
    assert settings["seed"] == 42 and settings["speed"] == 8.0


# -- whan server -------------------------------------------------------------------------


def test_step_run_is_deterministic(tmp_path, capsys):
    blobs = []
    for name in ("one", "two"):
        db = str(tmp_path / name)
        code = main(["server", "--scenario", "demo", "--db-path", db,
                     "--seed", "11", "--step", "800"])
        assert code == 0
        with open(os.path.join(db, "events.tbl"), "rb") as fh:
            blobs.append(fh.read())
    assert blobs[0] == blobs[1] and len(blobs[0]) > 0
    out = capsys.readouterr().out
    assert "800 ticks" in out and "80.0 s" in out


def test_malformed_scenario_exits_2_with_line(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[config]\nstart_clock = 08:00\n[node]\naddress = zero\n")
    code = main(["server", "--scenario", str(bad), "--db-path", str(tmp_path / "db"),
                 "--step", "1"])
    assert code == 2
    err = capsys.readouterr().err
    assert "bad.cfg:" in err


def test_missing_scenario_exits_2(tmp_path, capsys):
    code = main(["server", "--scenario", "no-such-home", "--db-path",
                 str(tmp_path / "db"), "--step", "1"])
    assert code == 2
    assert "no-such-home" in capsys.readouterr().err


def test_server_exits_cleanly_on_sigterm(tmp_path):
    db = str(tmp_path / "db")
    boot = "import sys; from whansim.cli import main; sys.exit(main(sys.argv[1:]))"
    proc = subprocess.Popen(
        [sys.executable, "-c", boot, "server", "--scenario", "demo", "--seed", "5",
         "--speed", "50", "--tcp-port", "0", "--http-port", "0", "--db-path", db],
        stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True)
    try:
        banner = proc.stdout.readline()  # handler is registered before this prints
        assert banner.startswith("whan server:"), banner
        time.sleep(1.0)
        proc.send_signal(signal.SIGTERM)
        assert proc.wait(timeout=15.0) == 0  # graceful path, not the default kill
    finally:
        proc.kill()
        proc.stdout.close()
    store = Store(db)
    try:
        assert len(store.readings) > 0  # the shutdown flush reached disk
    finally:
        store.close()


# -- whan ctl ----------------------------------------------------------------------------


@pytest.fixture
def live_tcp(tmp_path):
    sim = Simulation(load_scenario("demo"), str(tmp_path / "db"), seed=3)
    tcp = TcpServer(sim, port=0)
    tcp.start()
    stop = threading.Event()
    kernel = threading.Thread(target=sim.run_realtime,
                              kwargs={"speed": 40.0, "stop": stop}, daemon=True)
    kernel.start()
    yield tcp
    stop.set()
    kernel.join(timeout=5.0)
    tcp.close()
    sim.close()


def ctl(port: int, *argv: str) -> int:
    return main(["ctl", "--host", "127.0.0.1", "--port", str(port),
                 "--user", "alice", "--password", "wonderland", *argv])


def test_ctl_requires_credentials(capsys):
    code = main(["ctl", "--host", "127.0.0.1", "--port", "4840", "list"])
    assert code == 2
    assert "credentials" in capsys.readouterr().err


def test_ctl_connection_refused(capsys):
    probe = socket.socket()
    probe.bind(("127.0.0.1", 0))
    free_port = probe.getsockname()[1]
    probe.close()
    code = main(["ctl", "--host", "127.0.0.1", "--port", str(free_port),
                 "--user", "alice", "--password", "wonderland", "list"])
    assert code == 1
    assert "cannot connect" in capsys.readouterr().err


def test_ctl_rejects_bad_password(live_tcp, capsys):
    code = main(["ctl", "--host", "127.0.0.1", "--port", str(live_tcp.port),
                 "--user", "alice", "--password", "nope", "list"])
    assert code == 1
    assert "ERR 401" in capsys.readouterr().err


def test_ctl_list_read_set_mode(live_tcp, capsys):
    assert ctl(live_tcp.port, "list") == 0
    out = capsys.readouterr().out
    assert "temp1 temperature" in out and "lamp1 lamp" in out
    assert ctl(live_tcp.port, "set", "lamp1", "level", "40") == 0
    assert capsys.readouterr().out.startswith("OK ")
    assert ctl(live_tcp.port, "read", "lamp1") == 0
    assert "STATE lamp1" in capsys.readouterr().out
    assert ctl(live_tcp.port, "read", "nosuchdev") == 1
    assert "ERR 404" in capsys.readouterr().out
    assert ctl(live_tcp.port, "mode", "Night Mode") == 0
    assert capsys.readouterr().out.strip() == "OK"


def test_ctl_hist_csv(live_tcp, capsys):
    deadline = time.monotonic() + 10.0
    lines = []
    while time.monotonic() < deadline and len(lines) < 3:
        assert ctl(live_tcp.port, "hist", "temp1", "0", "9999999999", "--csv") == 0
        lines = capsys.readouterr().out.splitlines()
        time.sleep(0.1)
    assert lines[0] == "ts,value,rssi"
    assert len(lines) >= 3
    first = lines[1].split(",")
    assert first[1] == "2800"


def test_ctl_watch_streams_until_closed(live_tcp, capsys):
    codes = []
    watcher = threading.Thread(
        target=lambda: codes.append(ctl(live_tcp.port, "watch", "temp1")), daemon=True)
    watcher.start()
    time.sleep(1.0)  # a couple of report periods at speed 40
    live_tcp.close()
    watcher.join(timeout=5.0)
    assert codes == [0]
    out = capsys.readouterr().out
    assert "READING temp1" in out
