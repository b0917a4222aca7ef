"""Measurement reports: CSV sweeps with matching PNG figures.

Four reports cover the calibrated radio model and the stored history.  Each
writes <name>.csv into the output directory and renders the same series to
<name>.png, then prints both paths.  `rssi` sweeps signal strength against
distance, `delivery` sweeps Monte Carlo frame delivery ratio, `power` sweeps
the end device supply current against radio duty cycle, and `history` plots
one device's persisted samples from a store directory.
"""

from __future__ import annotations

import argparse
import csv
import os

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .channel import LinkModel, delivery_ratio, rssi_mean, sample_rssi_batch
from .devices import PowerProfile, duty_cycle_current
from .scenario import load_scenario
from .store import Store

SENSOR_IDS = {"temperature": 0, "light": 1, "motion": 2}


def _parse_distances(spec: str) -> list[float]:
    return [float(part) for part in spec.split(",") if part.strip()]


def _write_csv(path: str, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _finish(out_dir: str, name: str, header: list[str], rows: list[tuple], figure) -> int:
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, name + ".csv")
    png_path = os.path.join(out_dir, name + ".png")
    _write_csv(csv_path, header, rows)
    figure.savefig(png_path, dpi=120)
    plt.close(figure)
    print(csv_path)
    print(png_path)
    return 0


# -- sweeps ------------------------------------------------------------------------------


def report_rssi(args: argparse.Namespace) -> int:
    model = LinkModel()
    distances = _parse_distances(args.distances)
    rng = np.random.default_rng(args.seed)
    rows = []
    for d in distances:
        samples = sample_rssi_batch(model, d, args.samples, rng)
        rows.append((d, round(rssi_mean(model, d), 2),
                     round(float(np.mean(samples)), 2),
                     round(float(np.percentile(samples, 10)), 2),
                     round(float(np.percentile(samples, 90)), 2)))
    figure, axis = plt.subplots(figsize=(7, 4.5))
    xs = [r[0] for r in rows]
    axis.plot(xs, [r[1] for r in rows], marker="o", label="model mean")
    axis.fill_between(xs, [r[3] for r in rows], [r[4] for r in rows],
                      alpha=0.25, label="10th-90th percentile")
    axis.axhline(model.sensitivity, linestyle="--", color="red",
                 label="receiver sensitivity")
    axis.set_xlabel("distance (m)")
    axis.set_ylabel("RSSI (dBm)")
    axis.set_title("Received signal strength against distance")
    axis.legend()
    figure.tight_layout()
    return _finish(args.out_dir, "rssi",
                   ["distance_m", "mean_dbm", "sample_mean_dbm", "p10_dbm", "p90_dbm"],
                   rows, figure)


def report_delivery(args: argparse.Namespace) -> int:
    model = LinkModel()
    distances = _parse_distances(args.distances)
    rng = np.random.default_rng(args.seed)
    rows = [(d, round(delivery_ratio(model, d, args.frames, rng), 4))
            for d in distances]
    figure, axis = plt.subplots(figsize=(7, 4.5))
    axis.plot([r[0] for r in rows], [r[1] for r in rows], marker="o")
    axis.axhline(0.5, linestyle="--", color="gray")
    axis.set_xlabel("distance (m)")
    axis.set_ylabel("delivery ratio")
    axis.set_ylim(-0.02, 1.02)
    axis.set_title("Frame delivery ratio against distance (%d frames each)" % args.frames)
    figure.tight_layout()
    return _finish(args.out_dir, "delivery", ["distance_m", "delivery_ratio"],
                   rows, figure)


def report_power(args: argparse.Namespace) -> int:
    profile = PowerProfile()
    fractions = np.linspace(0.0, 1.0, args.points)
    rows = [(round(float(f), 4), round(duty_cycle_current(profile, float(f)), 5))
            for f in fractions]
    figure, axis = plt.subplots(figsize=(7, 4.5))
    axis.plot([r[0] for r in rows], [r[1] for r in rows])
    axis.set_xlabel("radio duty fraction")
    axis.set_ylabel("supply current (mA)")
    axis.set_yscale("log")
    axis.set_title("End device current against radio duty cycle")
    figure.tight_layout()
    return _finish(args.out_dir, "power", ["duty_fraction", "current_ma"], rows, figure)


def report_history(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    node = sensor = None
    for spec in scenario.nodes:
        for name, kind in spec.devices:
            if name == args.device:
                node, sensor = spec.address, SENSOR_IDS.get(kind)
    if node is None or sensor is None:
        print("no sensor named %r in scenario %s" % (args.device, args.scenario))
        return 1
    store = Store(args.db_path)
    try:
        readings = store.query_readings(node=node, sensor=sensor,
                                        since=args.since, until=args.until)
    finally:
        store.close()
    rows = [(r.t, r.value, r.rssi) for r in readings]
    figure, axis = plt.subplots(figsize=(7, 4.5))
    axis.plot([r[0] for r in rows], [r[1] for r in rows], marker=".")
    axis.set_xlabel("simulated time (s)")
    axis.set_ylabel("raw reading")
    axis.set_title("%s samples" % args.device)
    figure.tight_layout()
    return _finish(args.out_dir, "history-%s" % args.device,
                   ["ts", "value", "rssi"], rows, figure)


# -- wiring ------------------------------------------------------------------------------


def configure_parser(parser: argparse.ArgumentParser) -> None:
    kinds = parser.add_subparsers(dest="report_kind", required=True)

    rssi_p = kinds.add_parser("rssi", help="signal strength sweep")
    rssi_p.add_argument("--distances", default="0,2,5,10,15,20,25,30,38.1,45")
    rssi_p.add_argument("--samples", type=int, default=2000)
    rssi_p.add_argument("--seed", type=int, default=0)

    delivery_p = kinds.add_parser("delivery", help="delivery ratio sweep")
    delivery_p.add_argument("--distances", default="1,5,10,15,20,25,30,35,40,45,50")
    delivery_p.add_argument("--frames", type=int, default=2000)
    delivery_p.add_argument("--seed", type=int, default=0)

    power_p = kinds.add_parser("power", help="duty cycle current sweep")
    power_p.add_argument("--points", type=int, default=101)

    history_p = kinds.add_parser("history", help="stored samples for one device")
    history_p.add_argument("--db-path", dest="db_path", required=True)
    history_p.add_argument("--scenario", default="demo")
    history_p.add_argument("--device", required=True)
    history_p.add_argument("--since", type=float, default=None)
    history_p.add_argument("--until", type=float, default=None)

    for kind_parser in (rssi_p, delivery_p, power_p, history_p):
        kind_parser.add_argument("--out-dir", dest="out_dir", default="whan-report")


def run(args: argparse.Namespace) -> int:
    handler = {
        "rssi": report_rssi,
        "delivery": report_delivery,
        "power": report_power,
        "history": report_history,
    }[args.report_kind]
    return handler(args)
