"""Command-line experiment runner with CSV and JSON outputs.

One experiment per invocation; identical (config, seed) pairs produce
byte-identical CSV files. Infeasible design points become per-row "inf" or
empty markers rather than process failures; hard errors exit nonzero with a
machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import dual_waveform as dw
from . import isac as isac_mod
from . import ris_isac as ri
from .arrays import steering_vector
from .channels import angles_from_geometry, pathloss_amplitude
from .config import EXPERIMENTS, RunConfig, parse_config, render_config, scene_from_config
from .errors import ConfigError
from .optim import SolverConfig
from .sensing import (
    DetectionConfig,
    detection_probability,
    glrt_monte_carlo,
    maximize_illumination,
    trajectory_sweep,
)

CSV_HEADERS = {
    "sense-sweep": "waypoint,mode,power_db,crb",
    "detect": "snr_db,pf,pd_formula,pd_mc",
    "isac-tradeoff": "rho,R0,rate_bits,crb",
    "ris-isac-tradeoff": "mode,coupling,R0,rate_bits,crb",
    "beampattern": "angle_deg,j_total,j_comm,j_sense",
    "beampattern-phases": "ris_element,phase_rad",
}


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    x = float(value)
    if math.isnan(x):
        return ""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _write_csv(path: Path, header: str, rows) -> None:
    lines = [header]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\r\n".join(lines) + "\r\n", encoding="utf-8", newline="")


def _ordered_map(fn, items, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _run_sense_sweep(cfg: RunConfig, threads: int):
    scene = scene_from_config(cfg)
    start = np.asarray(cfg.road_start)
    end = np.asarray(cfg.road_end)
    fractions = np.linspace(0.0, 1.0, cfg.num_waypoints)
    waypoints = [tuple(start + f * (end - start)) for f in fractions]
    blocked = [i >= cfg.blocked_from_index for i in range(cfg.num_waypoints)]
    rows = trajectory_sweep(scene, waypoints, blocked=blocked)
    csv_rows = [(r.waypoint, r.mode, r.power_db, r.crb) for r in rows]
    diag = {"waypoints": [list(map(float, w)) for w in waypoints], "blocked": blocked}
    return {"": (CSV_HEADERS["sense-sweep"], csv_rows)}, diag


def _run_detect(cfg: RunConfig, threads: int):
    scene = scene_from_config(cfg)
    design = maximize_illumination(scene)
    seeds = np.random.SeedSequence(cfg.seed).spawn(
        len(cfg.snr_db_list) * len(cfg.pf_list)
    )
    tasks = []
    for snr_db in cfg.snr_db_list:
        for pf in cfg.pf_list:
            tasks.append((snr_db, pf, seeds[len(tasks)]))

    def one(task):
        snr_db, pf, seed_seq = task
        snr = 10.0 ** (snr_db / 10.0)
        det = DetectionConfig(false_alarm_rate=pf)
        # Calibrate the target gain so the matched-filter SNR hits the grid value.
        gain_var = snr * scene.noise_power_sensing / (
            scene.rx.num_elements * design.power
        )
        mc_scene = scene.replace(target_gain_var=gain_var, fluctuating_target=False)
        mc = glrt_monte_carlo(
            mc_scene, design.w, design.phi, cfg.trials, det,
            seed=int(seed_seq.generate_state(1)[0]),
        )
        return (snr_db, pf, detection_probability(snr, det), mc.empirical_pd, mc.empirical_pf)

    results = _ordered_map(one, tasks, threads)
    csv_rows = [r[:4] for r in results]
    diag = {
        "illumination_power": design.power,
        "empirical_pf": {f"{r[0]}dB/pf={r[1]}": r[4] for r in results},
    }
    return {"": (CSV_HEADERS["detect"], csv_rows)}, diag


def _run_isac_tradeoff(cfg: RunConfig, threads: int):
    scene = scene_from_config(cfg)
    angles = angles_from_geometry(scene)
    from .arrays import steering_derivative

    a_t = steering_vector(scene.tx, angles.theta1).entries
    scenario = isac_mod.IsacScenario(
        a_t=a_t,
        a_r=steering_vector(scene.rx, angles.theta1).entries,
        a_r_dot=steering_derivative(scene.rx, angles.theta1),
        h_c=a_t,  # placeholder; the sweep substitutes coupled channels
        noise_comms=scene.noise_power_comms,
        noise_sensing=scene.noise_power_sensing,
        target_gain_var=scene.target_gain_var,
        samples=scene.samples,
        budget=scene.transmit_power,
    )
    gain = pathloss_amplitude(
        float(np.linalg.norm(np.asarray(cfg.target_position) - np.asarray(cfg.bs_position))),
        cfg.pathloss_exp_direct,
    )
    max_rate = math.log2(
        1.0 + scene.transmit_power * (gain**2) * scene.tx.num_elements / scene.noise_power_comms
    )
    grid = np.linspace(0.0, 0.98 * max_rate, cfg.r0_points)
    rows = isac_mod.tradeoff_curve(
        scenario, cfg.rho_list, grid, channel_gain=gain, seed=cfg.seed
    )
    csv_rows = [(r.rho, r.rate_threshold, r.rate, r.crb) for r in rows]
    return {"": (CSV_HEADERS["isac-tradeoff"], csv_rows)}, {"max_rate_bits": max_rate}


def _run_ris_isac_tradeoff(cfg: RunConfig, threads: int):
    scene = scene_from_config(cfg)
    scenario = ri.RisIsacScenario.from_scene(scene)
    solver = SolverConfig(restarts=cfg.restarts, seed=cfg.seed)
    csv_rows = []
    diag = {}

    def grid_for(scn, phi):
        p_t = scene.transmit_power
        h_c = scn.h_c(phi)
        max_rate = math.log2(
            1.0 + p_t * float(np.real(np.vdot(h_c, h_c))) / scene.noise_power_comms
        )
        return np.linspace(0.0, 0.97 * max_rate, cfg.r0_points), max_rate

    for mode in cfg.ris_modes:
        shaped = ri._apply_coupling(scenario, cfg.coupling)
        if mode == "with":
            prof = ri.optimize_ris_profile(shaped, cfg=solver)
            grid, max_rate = grid_for(shaped, prof.phi.phases)
        elif mode == "without":
            grid, max_rate = grid_for(ri._zero_ris(shaped), np.zeros(0))
        else:
            prof = ri.optimize_ris_profile(shaped, cfg=solver)
            grid, max_rate = grid_for(shaped, prof.phi.phases)
        rows = ri.ris_isac_tradeoff(scenario, cfg.coupling, mode, grid, solver)
        diag[f"max_rate_{mode}"] = max_rate
        csv_rows.extend(
            (r.mode, r.coupling, r.rate_threshold, r.rate, r.crb) for r in rows
        )
    return {"": (CSV_HEADERS["ris-isac-tradeoff"], csv_rows)}, diag


def _run_beampattern(cfg: RunConfig, threads: int):
    scene = scene_from_config(cfg)
    angles = angles_from_geometry(scene)
    width = math.radians(cfg.beam_width_deg)
    target_angles = [math.radians(a) for a in cfg.target_angles_deg]
    beams = [(a, width, 1.0) for a in target_angles]
    beams.append((angles.omega_t, width, 1.0))  # serve the user through the RIS
    spec = dw.make_beampattern_spec(beams, target_angles, grid_points=cfg.grid_points)
    gamma = 10.0 ** (cfg.sinr_threshold_db / 10.0)
    design = dw.design_dual_waveform(scene, spec, gamma, seed=cfg.seed)

    r_comm = np.outer(design.comm_precoder, design.comm_precoder.conj())
    r_sense = design.sensing_precoder @ design.sensing_precoder.conj().T
    steer = np.column_stack(
        [steering_vector(scene.tx, a).entries for a in spec.grid]
    )
    j_total = np.real(np.einsum("id,ij,jd->d", steer.conj(), design.covariance, steer))
    j_comm = np.real(np.einsum("id,ij,jd->d", steer.conj(), r_comm, steer))
    j_sense = np.real(np.einsum("id,ij,jd->d", steer.conj(), r_sense, steer))
    csv_rows = [
        (math.degrees(a), jt, jc, js)
        for a, jt, jc, js in zip(spec.grid, j_total, j_comm, j_sense)
    ]
    phase_rows = list(enumerate(np.angle(design.phi.phases)))
    diag = {
        "sinr": design.sinr,
        "sinr_threshold": gamma,
        "loss": design.loss,
        "tau": design.tau,
        "converged": design.converged,
        "ris_angle_deg": math.degrees(angles.omega_t),
    }
    return {
        "": (CSV_HEADERS["beampattern"], csv_rows),
        "_phases": (CSV_HEADERS["beampattern-phases"], phase_rows),
    }, diag


_RUNNERS = {
    "sense-sweep": _run_sense_sweep,
    "detect": _run_detect,
    "isac-tradeoff": _run_isac_tradeoff,
    "ris-isac-tradeoff": _run_ris_isac_tradeoff,
    "beampattern": _run_beampattern,
}

_PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Quick-look plot for {experiment} output (generated alongside the CSV).\"\"\"
import csv
from pathlib import Path

import matplotlib.pyplot as plt

rows = list(csv.DictReader(Path("{csv_name}").open()))
cols = list(rows[0].keys())
x = [float(r[cols[0]]) if r[cols[0]] not in ("", "inf", "-inf") else float("nan")
     for r in rows]
fig, ax = plt.subplots()
for col in cols[1:]:
    try:
        y = [float(r[col]) if r[col] not in ("", "inf", "-inf") else float("nan")
             for r in rows]
    except ValueError:
        continue
    ax.plot(x, y, label=col)
ax.set_xlabel(cols[0])
ax.legend()
fig.savefig("{experiment}.png", dpi=150)
print("wrote {experiment}.png")
"""


def run_experiment(cfg: RunConfig, out_dir: Path, threads: int = 1,
                   emit_plot_script: bool = False) -> dict:
    """Run one experiment; writes CSV file(s) plus a JSON summary."""
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    tables, diagnostics = _RUNNERS[cfg.experiment](cfg, threads)
    elapsed = time.perf_counter() - started

    written = []
    for suffix, (header, rows) in tables.items():
        path = out_dir / f"{cfg.experiment}{suffix}.csv"
        _write_csv(path, header, rows)
        written.append(str(path))
    summary = {
        "experiment": cfg.experiment,
        "config": dataclasses.asdict(cfg),
        "outputs": written,
        "diagnostics": diagnostics,
        "wall_clock_seconds": elapsed,
    }
    summary_path = out_dir / f"{cfg.experiment}_summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, default=str) + "\n")
    if emit_plot_script:
        script = _PLOT_SCRIPT.format(
            experiment=cfg.experiment, csv_name=f"{cfg.experiment}.csv"
        )
        (out_dir / f"{cfg.experiment}_plot.py").write_text(script)
    return summary


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risac",
        description="RIS-aided sensing and ISAC experiment runner",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, default=None, help="key = value config file")
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads for grid points")
        p.add_argument("--emit-plot-script", action="store_true",
                       help="write a matplotlib quick-look script next to the CSV")
    return parser


def _explicit_experiment(text: str) -> bool:
    for raw_line in text.splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if line.startswith("experiment") and "=" in line:
            return True
    return False


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.config is not None:
            text = Path(args.config).read_text()
            cfg = parse_config(text)
            if _explicit_experiment(text) and cfg.experiment != args.experiment:
                raise ConfigError(
                    f"config file requests {cfg.experiment!r} but the "
                    f"subcommand is {args.experiment!r}"
                )
        else:
            cfg = RunConfig()
        cfg.experiment = args.experiment
        if args.seed is not None:
            cfg.seed = args.seed
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        run_experiment(cfg, args.out, threads=args.threads,
                       emit_plot_script=args.emit_plot_script)
        return 0
    except Exception as exc:  # error contract: machine-readable JSON, nonzero exit
        error = {"error": type(exc).__name__, "detail": str(exc)}
        print(json.dumps(error), file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
