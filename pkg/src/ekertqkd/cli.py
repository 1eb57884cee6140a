"""Batch front end: keygen, attack-sweep, theory and report.

Exit codes: 0 success, 1 configuration error, 2 pipeline error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import qstate
from .config import ConfigError, RunConfig, load_config
from .eavesdrop import AttackMode, AttackSpec, default_grid, format_sweep_csv, sweep
from .postprocess import (
    SessionReport,
    amplify,
    bell_stream,
    ber,
    conservative_ber,
    detection_time,
    estimate_bell,
    eve_bound,
    reconcile,
    residual_info,
)
from .protocol import SessionData, run_session, sift
from .qstate import PoincarePoint
from .rng import substream
from .source import throughput

log = logging.getLogger("ekertqkd")

EXIT_OK, EXIT_CONFIG, EXIT_PIPELINE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def format_key(bits) -> str:
    return "".join("1" if b else "0" for b in bits) + "\n"


def parse_key(text: str) -> np.ndarray:
    body = text.strip()
    if body and set(body) - {"0", "1"}:
        raise ValueError("key files may only contain '0' and '1'")
    return np.frombuffer(body.encode(), dtype=np.uint8) - ord("0")


def process_session(data: SessionData, cfg: RunConfig) -> tuple[SessionReport, dict]:
    """Run the classical pipeline on a recorded session.

    Returns the report and the key material (alice, bob, reconciled, final).
    """
    sifted = sift(data)
    n_raw = len(sifted.alice_key)
    if n_raw == 0:
        raise RuntimeError("session produced no key bits")
    bell = estimate_bell(sifted.bell_s, sifted.bell_s_prime)
    measured = ber(sifted.alice_key, sifted.bob_key)
    bound = eve_bound(conservative_ber(measured, n_raw, cfg.ber_confidence_sigmas), cfg.source.double_pair_key_frac)
    eve_bits = math.ceil(bound * n_raw)

    schedule = None
    if cfg.reconcile_initial_block is not None:
        schedule = [cfg.reconcile_initial_block * 2**i for i in range(cfg.reconcile_rounds)]
    elif measured == 0:
        schedule = [max(1, n_raw // 4)]
    elif measured >= 0.5:
        raise RuntimeError(f"bit error rate {measured:.3f} too high to reconcile")
    rec = reconcile(
        sifted.alice_key,
        sifted.bob_key,
        block_size_schedule=schedule,
        rng=substream(data.seed, "reconcile"),
        ber_estimate=measured,
        check_parities=cfg.reconcile_check_parities,
    )
    n_ec = len(rec.key)
    if cfg.amplify_security_bits is not None:
        n_final = n_ec - eve_bits - cfg.amplify_security_bits
    else:
        n_final = int(math.floor(cfg.amplify_ratio * n_ec))
    n_final = max(0, min(n_final, n_ec))
    hash_seed = int(substream(data.seed, "hash").integers(2**63 - 1))
    final = amplify(rec.key, n_final, hash_seed)
    resid = residual_info(n_ec, n_final, eve_bits)

    usable_rate = throughput(cfg.source).usable_rate
    det = detection_time(bell_stream(data), usable_rate)
    report = SessionReport(
        n_raw=n_raw,
        ber=measured,
        eve_bound=bound,
        n_ec=n_ec,
        n_final=n_final,
        residual_s=resid.s,
        residual_bound=resid.bound,
        bell=bell,
        detection_time_s=det.time_s,
        elapsed_s=data.elapsed_s,
        bits_disclosed=rec.bits_disclosed,
        n_trials=len(data),
    )
    keys = {"alice": sifted.alice_key, "bob": sifted.bob_key, "reconciled": rec.key, "final": final}
    return report, keys


def write_outputs(out: Path, report: SessionReport, keys: dict, data: SessionData | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "alice.key").write_text(format_key(keys["alice"]))
    (out / "bob.key").write_text(format_key(keys["bob"]))
    (out / "reconciled.key").write_text(format_key(keys["reconciled"]))
    (out / "final.key").write_text(format_key(keys["final"]))
    (out / "report.txt").write_text(report.to_text())
    (out / "report.csv").write_text(SessionReport.csv_header() + "\n" + report.to_csv_row() + "\n")
    if data is not None:
        (out / "session.log").write_text(data.to_log())


def cmd_keygen(cfg: RunConfig, out: Path) -> SessionReport:
    data = run_session(cfg.session_config(), seed=cfg.seed)
    report, keys = process_session(data, cfg)
    write_outputs(out, report, keys, data)
    return report


def cmd_attack_sweep(cfg: RunConfig, plane, grid, mode, csv_path: Path | None = None) -> str:
    grid = list(grid)
    if not grid:
        raise ConfigError("attack sweep grid is empty")
    rows = sweep(
        plane,
        grid,
        mode,
        fraction=cfg.sweep_fraction,
        trials_per_point=cfg.sweep_trials_per_point,
        seed=cfg.seed,
        visibility=cfg.visibility,
        source=cfg.source,
    )
    text = format_sweep_csv(rows)
    if csv_path is not None:
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path.write_text(text)
    return text


def _clean(x: float) -> float:
    # hide matrix round-off in printed predictions
    return 0.0 if abs(x) < 1e-12 else x


def cmd_theory(attack: AttackSpec, visibility: float = 1.0) -> str:
    obs = qstate.predicted_observables(attack, visibility)
    lines = [
        f"attack={attack.mode.value} plane={attack.basis.plane.value} angle={attack.basis.angle:g} "
        f"fraction={attack.fraction:g} visibility={visibility:g}",
        f"S={_clean(obs.S):.6g}",
        f"S_prime={_clean(obs.S_prime):.6g}",
    ]
    for (a, b), e in zip(qstate.KEY_SETTINGS, obs.ber_per_setting):
        lines.append(f"BER[alpha{a},beta{b}]={_clean(e):.6g}")
    lines.append(f"BER_avg={_clean(obs.ber_avg):.6g}")
    return "\n".join(lines) + "\n"


def cmd_report(cfg: RunConfig, log_path: Path, out: Path | None) -> SessionReport:
    data = SessionData.from_log(log_path.read_text())
    report, keys = process_session(data, cfg)
    if out is not None:
        write_outputs(out, report, keys)
    return report


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ekertqkd", description="Entangled-photon QKD simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", type=Path, help="key=value configuration file")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config file)")
        sp.add_argument("--trials", type=int, help="number of collection windows")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("-v", "--verbose", action="store_true")

    kg = sub.add_parser("keygen", help="simulate a session and run the key pipeline")
    common(kg)

    sw = sub.add_parser("attack-sweep", help="analytic and simulated observables across attack bases")
    common(sw)
    sw.add_argument("--plane", choices=[pl.value for pl in qstate.Plane])
    sw.add_argument("--grid", help="comma-separated attack angles in degrees")
    sw.add_argument("--mode", choices=[AttackMode.FILTER.value, AttackMode.DEPHASE.value])
    sw.add_argument("--csv", type=Path, help="write the table here as well as to stdout")

    th = sub.add_parser("theory", help="closed-form predictions for an attack")
    common(th)
    th.add_argument("--mode", choices=[m.value for m in AttackMode])
    th.add_argument("--plane", choices=[pl.value for pl in qstate.Plane])
    th.add_argument("--angle", type=float)
    th.add_argument("--fraction", type=float)
    th.add_argument("--visibility", type=float)

    rp = sub.add_parser("report", help="rebuild the report from a session log")
    common(rp)
    rp.add_argument("log", nargs="?", type=Path, help="session log (default: OUT/session.log)")
    rp.add_argument("--csv", type=Path, help="append the report CSV row here")
    return p


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig(duration_s=600.0)
    return cfg.with_overrides(seed=args.seed, n_trials=args.trials, out_dir=str(args.out) if args.out else None)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
        if args.command == "theory":
            base = cfg.attack
            mode = args.mode or base.mode
            plane = args.plane or base.basis.plane
            angle = base.basis.angle if args.angle is None else args.angle
            fraction = base.fraction if args.fraction is None else args.fraction
            attack = AttackSpec(mode, PoincarePoint(plane, angle), fraction)
            vis = cfg.visibility if args.visibility is None else args.visibility
            if not 0.0 <= vis <= 1.0:
                raise ConfigError(f"visibility must be in [0, 1], got {vis}")
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(cfg.out_dir)
    try:
        if args.command == "keygen":
            report = cmd_keygen(cfg, out)
            sys.stdout.write(report.to_text())
        elif args.command == "attack-sweep":
            plane = qstate.Plane(args.plane) if args.plane else cfg.sweep_plane
            mode = AttackMode(args.mode) if args.mode else cfg.sweep_mode
            if args.grid is not None:
                try:
                    grid = [float(x) for x in args.grid.split(",") if x.strip()]
                except ValueError as exc:
                    raise ConfigError(f"bad --grid: {exc}") from None
            else:
                grid = list(cfg.sweep_grid) if cfg.sweep_grid is not None else default_grid(plane)
            sys.stdout.write(cmd_attack_sweep(cfg, plane, grid, mode, args.csv))
        elif args.command == "theory":
            sys.stdout.write(cmd_theory(attack, vis))
        elif args.command == "report":
            log_path = args.log or out / "session.log"
            report = cmd_report(cfg, log_path, args.out)
            sys.stdout.write(report.to_text())
            if args.csv:
                args.csv.write_text(SessionReport.csv_header() + "\n" + report.to_csv_row() + "\n")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ValueError, OSError) as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
