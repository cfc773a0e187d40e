"""Config-driven experiment runner.

One YAML file fully determines an experiment: the WDM comb, the link, the
backpropagation engine, simulation controls, seeds, and optional sweep
grids. Every artifact written (waveforms, symbol records, coefficient
sets, CSV tables) carries the configuration hash so results can always be
traced back; re-running an unchanged config reproduces identical files.

Subcommands: simulate, coeffs, optimize, dbp, sweep, cost, figure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import fileio
from .channel import LinkConfig, SimSettings, propagate_link
from .complexity import cb_essfm_cost, essfm_time_domain_cost
from .dbp import (DbpConfig, channel_memory_samples, make_dbp_coefficient_set,
                  run_dbp)
from .kernel import CoefficientSet
from .metrics import prepare_dbp_input, snr, symbols_from_dbp_output
from .optimize import (build_training_set, optimize_coefficients,
                       sweep_launch_power, sweep_splitting_ratio)
from .signals import DualPolWaveform, WdmConfig, demux_channel, generate_wdm

FIGURE_IDS = ("snr_vs_nsb", "snr_vs_rho", "snr_vs_steps",
              "snr_vs_complexity", "snr_vs_length")


class _ConfigLoader(yaml.SafeLoader):
    """SafeLoader that also accepts floats like 32.0e9 (no signed exponent)."""


_ConfigLoader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                   |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                   |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                   |[-+]?\.(?:inf|Inf|INF)
                   |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs, loadable from a single YAML file."""

    wdm: WdmConfig
    link: LinkConfig
    dbp: dict
    sim: SimSettings = field(default_factory=lambda: SimSettings(
        max_phase_rad=2e-3))
    num_symbols: int = 4096
    sim_rate_hz: float | None = None
    seeds: dict = field(default_factory=lambda: {"train": 1, "val": 2,
                                                 "eval": 9})
    sweeps: dict = field(default_factory=dict)
    output_dir: str = "out"
    threads: int = 1
    checkpoint_spans: bool = False

    @classmethod
    def from_yaml(cls, path) -> "ExperimentConfig":
        doc = yaml.load(Path(path).read_text(), Loader=_ConfigLoader)
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {"wdm", "link", "dbp", "sim", "num_symbols", "sim_rate_hz",
                 "seeds", "sweeps", "output_dir", "threads",
                 "checkpoint_spans"}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        cfg = cls(wdm=WdmConfig(**doc["wdm"]), link=LinkConfig(**doc["link"]),
                  dbp=dict(doc["dbp"]),
                  sim=SimSettings(**doc.get("sim", {"max_phase_rad": 2e-3})),
                  num_symbols=int(doc.get("num_symbols", 4096)),
                  sim_rate_hz=doc.get("sim_rate_hz"),
                  seeds={**{"train": 1, "val": 2, "eval": 9},
                         **doc.get("seeds", {})},
                  sweeps=dict(doc.get("sweeps", {})),
                  output_dir=str(doc.get("output_dir", "out")),
                  threads=int(doc.get("threads", 1)),
                  checkpoint_spans=bool(doc.get("checkpoint_spans", False)))
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        doc = {"wdm": asdict(self.wdm), "link": asdict(self.link),
               "dbp": dict(self.dbp), "sim": asdict(self.sim),
               "num_symbols": self.num_symbols,
               "sim_rate_hz": self.sim_rate_hz, "seeds": dict(self.seeds),
               "sweeps": dict(self.sweeps), "output_dir": self.output_dir,
               "threads": self.threads,
               "checkpoint_spans": self.checkpoint_spans}
        return doc

    def config_hash(self) -> str:
        # threads and output_dir are execution details: two runs of the same
        # experiment must hash alike no matter where or how parallel they ran
        doc = self.to_dict()
        del doc["threads"], doc["output_dir"]
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def dbp_config(self, **overrides) -> DbpConfig:
        return DbpConfig(link=self.link, **{**self.dbp, **overrides})

    def dbp_rate_hz(self) -> float:
        return self.dbp_config().oversampling * self.wdm.baud_rate

    def validate(self):
        dcfg = self.dbp_config()  # exercises the engine invariants
        if dcfg.oversampling * self.wdm.baud_rate < self.wdm.baud_rate:
            raise ValueError("backpropagation rate below the symbol rate")
        if self.num_symbols < 2:
            raise ValueError("num_symbols must be >= 2")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if {"train", "val", "eval"} - set(self.seeds):
            raise ValueError("seeds must define train, val and eval")
        for key in self.sweeps:
            if key not in ("rho", "power_dbm", "n_steps", "n_subbands",
                           "num_spans"):
                raise ValueError(f"unknown sweep grid {key!r}")


def _simulate_eval(cfg: ExperimentConfig, seed: int | None = None):
    seed = cfg.seeds["eval"] if seed is None else seed
    tx, record = generate_wdm(cfg.wdm, cfg.num_symbols,
                              sim_rate=cfg.sim_rate_hz, seed=seed)
    rx = propagate_link(tx, cfg.link, cfg.sim)
    return tx, rx, record


def _coefficients_for(cfg: ExperimentConfig, dcfg: DbpConfig,
                      power_w: float | None = None) -> CoefficientSet | None:
    if dcfg.variant in ("EDC", "IDEAL_SSFM"):
        return None
    p_ref = cfg.wdm.launch_power_w if power_w is None else power_w
    coeffs = make_dbp_coefficient_set(dcfg, dcfg.oversampling
                                      * cfg.wdm.baud_rate, p_ref)
    if dcfg.coefficient_source == "optimized":
        train = build_training_set(cfg.link, cfg.wdm, cfg.num_symbols,
                                   cfg.sim, cfg.seeds["train"],
                                   cfg.seeds["val"], cfg.sim_rate_hz)
        coeffs = optimize_coefficients(train, dcfg, coeffs).coeffs
    return coeffs


def _snr_of(cfg: ExperimentConfig, rx: DualPolWaveform, record,
            dcfg: DbpConfig, coeffs: CoefficientSet | None) -> float:
    idx = (cfg.wdm.num_channels - 1) // 2
    w = prepare_dbp_input(rx, cfg.wdm, dcfg, idx)
    out = run_dbp(w, dcfg, coeffs)
    return snr(symbols_from_dbp_output(out, cfg.wdm), record.channel(idx)).snr_db


def _out_dir(cfg: ExperimentConfig, args) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    seed = args.seed if args.seed is not None else cfg.seeds["eval"]
    ckpt = None
    start_span = 0
    tx, record = generate_wdm(cfg.wdm, cfg.num_symbols,
                              sim_rate=cfg.sim_rate_hz, seed=seed)
    state = tx
    if cfg.checkpoint_spans:
        def ckpt(span, w):
            fileio.save_waveform(out / f"ckpt_span{span:03d}.fdbp", w)
        if args.resume:
            done = sorted(out.glob("ckpt_span*.fdbp"))
            if done:
                start_span = int(done[-1].stem[-3:])
                state = fileio.load_waveform(done[-1])
                print(f"resuming after span {start_span}")
    rx = propagate_link(state, cfg.link, cfg.sim, checkpoint=ckpt,
                        first_span=start_span)
    fileio.save_waveform(out / "tx.fdbp", tx)
    fileio.save_waveform(out / "rx.fdbp", rx)
    fileio.save_symbols(out / "symbols.npz", record)

    # per-channel power audit on the transmitted comb
    audit = {}
    for c, f_c in enumerate(cfg.wdm.channel_freqs):
        ch = demux_channel(tx, f_c, cfg.wdm.baud_rate * (1 + cfg.wdm.rolloff))
        audit[f"channel_{c}"] = float(10 * np.log10(ch.power * 1e3))
    manifest = {"config_hash": cfg.config_hash(), "seed": seed,
                "seeds": cfg.seeds, "num_symbols": cfg.num_symbols,
                "sample_rate_hz": tx.sample_rate,
                "target_power_dbm": cfg.wdm.launch_power_dbm_per_channel,
                "per_channel_power_dbm": audit,
                "files": ["tx.fdbp", "rx.fdbp", "symbols.npz"]}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    print(f"simulate: wrote {out}/tx.fdbp rx.fdbp symbols.npz "
          f"(hash {manifest['config_hash']})")
    return 0


def cmd_coeffs(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    dcfg = cfg.dbp_config()
    coeffs = make_dbp_coefficient_set(dcfg, cfg.dbp_rate_hz(),
                                      cfg.wdm.launch_power_w)
    fileio.save_coefficients(out / "coeffs.json", coeffs, cfg.config_hash())
    taps = {h: c.size for h, c in coeffs.coeffs.items()}
    print(f"coeffs: wrote {out}/coeffs.json (taps per band: {taps})")
    return 0


def cmd_optimize(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    dcfg = cfg.dbp_config()
    train = build_training_set(cfg.link, cfg.wdm, cfg.num_symbols, cfg.sim,
                               cfg.seeds["train"], cfg.seeds["val"],
                               cfg.sim_rate_hz)
    init = make_dbp_coefficient_set(dcfg, cfg.dbp_rate_hz(),
                                    cfg.wdm.launch_power_w)
    result = optimize_coefficients(train, dcfg, init)
    fileio.save_coefficients(out / "coeffs_optimized.json", result.coeffs,
                             cfg.config_hash())
    report = {"config_hash": cfg.config_hash(), "improved": result.improved,
              "init_val_mse": result.init_val_mse,
              "final_val_mse": result.final_val_mse,
              "train_mse_path": list(result.train_mse_path)}
    (out / "optimize_report.json").write_text(json.dumps(report, indent=1) + "\n")
    print(f"optimize: improved={result.improved} "
          f"val MSE {result.init_val_mse:.3e} -> {result.final_val_mse:.3e}")
    return 0


def cmd_dbp(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    dcfg = cfg.dbp_config()
    rx = fileio.load_waveform(args.waveform or out / "rx.fdbp")
    coeffs = fileio.load_coefficients(args.coeffs) if args.coeffs \
        else _coefficients_for(cfg, dcfg)
    idx = (cfg.wdm.num_channels - 1) // 2
    w = prepare_dbp_input(rx, cfg.wdm, dcfg, idx)
    post = run_dbp(w, dcfg, coeffs)
    fileio.save_waveform(out / "dbp_out.fdbp", post)
    rows = [{"variant": dcfg.variant, "N_st": dcfg.n_steps,
             "N_sb": dcfg.n_subbands, "rho": dcfg.splitting_ratio}]
    symbols_path = args.symbols or out / "symbols.npz"
    if Path(symbols_path).exists():
        record = fileio.load_symbols(symbols_path)
        result = snr(symbols_from_dbp_output(post, cfg.wdm),
                     record.channel(idx))
        rows[0].update(SNR_dB=result.snr_db, SNR_x_dB=result.snr_x_db,
                       SNR_y_dB=result.snr_y_db,
                       num_symbols=result.num_symbols)
        print(f"dbp: {dcfg.variant} SNR {result.snr_db:.2f} dB")
    else:
        print("dbp: no symbol record found, wrote waveform only")
    fileio.write_csv(out / "dbp_result.csv", rows, cfg.config_hash())
    return 0


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    if not cfg.sweeps:
        raise SystemExit("config declares no sweep grids")
    dcfg = cfg.dbp_config()
    wrote = []
    if "rho" in cfg.sweeps:
        _, rx, record = _simulate_eval(cfg)
        res = sweep_splitting_ratio(cfg.sweeps["rho"], rx, record, cfg.wdm,
                                    dcfg)
        fileio.write_csv(out / "sweep_rho.csv", res.csv_rows(),
                         cfg.config_hash())
        wrote.append(f"sweep_rho.csv (best rho {res.best_value:g}, "
                     f"{res.best_snr_db:.2f} dB)")
    if "power_dbm" in cfg.sweeps:
        grid = list(cfg.sweeps["power_dbm"])

        def one_point(p):
            sub = replace(cfg.wdm, launch_power_dbm_per_channel=float(p))
            tx, record = generate_wdm(sub, cfg.num_symbols,
                                      sim_rate=cfg.sim_rate_hz,
                                      seed=cfg.seeds["eval"])
            rx = propagate_link(tx, cfg.link, cfg.sim)
            coeffs = _coefficients_for(cfg, dcfg, sub.launch_power_w)
            c = replace(cfg, wdm=sub)
            return _snr_of(c, rx, record, dcfg, coeffs)

        if cfg.threads > 1:
            with ThreadPoolExecutor(cfg.threads) as pool:
                curve = list(pool.map(one_point, grid))
        else:
            curve = [one_point(p) for p in grid]
        rows = [{"power_dbm": p, "SNR_dB": s} for p, s in zip(grid, curve)]
        fileio.write_csv(out / "sweep_power.csv", rows, cfg.config_hash())
        best = int(np.argmax(curve))
        wrote.append(f"sweep_power.csv (best {grid[best]:g} dBm, "
                     f"{curve[best]:.2f} dB)")
    for line in wrote:
        print("sweep:", line)
    return 0


def cmd_cost(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    dcfg = cfg.dbp_config()
    n, n_ov = dcfg.block_size, dcfg.overlap
    n_sps = dcfg.oversampling
    steps_grid = cfg.sweeps.get("n_steps", [dcfg.n_steps])
    rows = []
    rate = cfg.dbp_rate_hz()
    mem_rule = lambda d: (make_dbp_coefficient_set(
        d, rate, cfg.wdm.launch_power_w).coeffs[0].size - 1) // 2
    for n_st in steps_grid:
        edc = essfm_time_domain_cost(n, n_ov, n_sps, 0)
        rows.append(edc.csv_row("EDC", 0, 1, n, n_ov, n_sps))
        if n_st == 0:
            continue
        d_t = replace(dcfg, variant="OSSFM", n_steps=int(n_st), n_subbands=1)
        rows.append(essfm_time_domain_cost(n, n_ov, n_sps, int(n_st), 0)
                    .csv_row("OSSFM", int(n_st), 1, n, n_ov, n_sps))
        d_e = replace(d_t, variant="ESSFM")
        rows.append(essfm_time_domain_cost(n, n_ov, n_sps, int(n_st),
                                           mem_rule(d_e))
                    .csv_row("ESSFM", int(n_st), 1, n, n_ov, n_sps))
        d_c = replace(dcfg, variant="CB_ESSFM", n_steps=int(n_st))
        rows.append(cb_essfm_cost(n, n_ov, n_sps, int(n_st), d_c.n_subbands)
                    .csv_row("CB_ESSFM", int(n_st), d_c.n_subbands, n, n_ov,
                             n_sps))
    seen = set()
    rows = [r for r in rows
            if (key := tuple(r.values())) not in seen and not seen.add(key)]
    fileio.write_csv(out / "cost.csv", rows, cfg.config_hash())
    print(f"cost: wrote {out}/cost.csv ({len(rows)} rows)")
    return 0


def _figure_rows(cfg: ExperimentConfig, figure_id: str) -> list[dict]:
    dcfg = cfg.dbp_config()
    if figure_id == "snr_vs_rho":
        grid = cfg.sweeps.get("rho", [round(0.1 * k, 1) for k in range(11)])
        _, rx, record = _simulate_eval(cfg)
        res = sweep_splitting_ratio(grid, rx, record, cfg.wdm, dcfg)
        return res.csv_rows()

    if figure_id == "snr_vs_nsb":
        grid = cfg.sweeps.get("n_subbands", [1, 2, 4, 8])
        _, rx, record = _simulate_eval(cfg)
        rows = []
        for n_sb in grid:
            d = replace(dcfg, n_subbands=int(n_sb))
            coeffs = _coefficients_for(cfg, d)
            rows.append({"N_sb": int(n_sb),
                         "SNR_dB": _snr_of(cfg, rx, record, d, coeffs)})
        return rows

    if figure_id == "snr_vs_length":
        grid = cfg.sweeps.get("num_spans", [1, 3, 5])
        rows = []
        for spans in grid:
            sub = replace(cfg, link=replace(cfg.link, num_spans=int(spans)))
            d = sub.dbp_config()
            _, rx, record = _simulate_eval(sub)
            coeffs = _coefficients_for(sub, d)
            rows.append({"num_spans": int(spans),
                         "length_km": sub.link.total_length_km,
                         "SNR_dB": _snr_of(sub, rx, record, d, coeffs)})
        return rows

    # remaining figures scan the step grid x variants (EDC once, as N_st=0)
    steps_grid = [int(s) for s in cfg.sweeps.get("n_steps", [dcfg.n_steps])]
    _, rx, record = _simulate_eval(cfg)
    rows = []
    for pos, n_st in enumerate(steps_grid):
        for name in ("EDC", "OSSFM", "ESSFM", "CB_ESSFM"):
            if name == "EDC" and pos:
                continue
            d = replace(dcfg, variant=name,
                        n_steps=0 if name == "EDC" else n_st,
                        n_subbands=dcfg.n_subbands if name == "CB_ESSFM"
                        else 1)
            coeffs = _coefficients_for(cfg, d)
            got = _snr_of(cfg, rx, record, d, coeffs)
            row = {"variant": name, "N_st": d.n_steps, "N_sb": d.n_subbands,
                   "SNR_dB": got}
            if figure_id == "snr_vs_complexity":
                if name == "CB_ESSFM":
                    cost = cb_essfm_cost(d.block_size, d.overlap,
                                         d.oversampling, d.n_steps,
                                         d.n_subbands)
                else:
                    n_taps = 0 if coeffs is None else \
                        (coeffs.coeffs[0].size - 1) // 2
                    if name == "OSSFM":
                        n_taps = 0
                    cost = essfm_time_domain_cost(d.block_size, d.overlap,
                                                  d.oversampling, d.n_steps,
                                                  n_taps)
                row["RM_per_2D"] = cost.rm_per_2d
                row["RA_per_2D"] = cost.ra_per_2d
            rows.append(row)
    return rows


def cmd_figure(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    if args.figure_id not in FIGURE_IDS:
        raise SystemExit(f"figure_id must be one of {FIGURE_IDS}")
    rows = _figure_rows(cfg, args.figure_id)
    path = out / f"{args.figure_id}.csv"
    fileio.write_csv(path, rows, cfg.config_hash())
    print(f"figure: wrote {path} ({len(rows)} rows)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fiberdbp",
        description="fiber nonlinearity compensation experiment runner")
    parser.add_argument("--config", required=True, help="YAML experiment file")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the evaluation seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="parallel sweep evaluations")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate").add_argument("--resume", action="store_true")
    sub.add_parser("coeffs")
    sub.add_parser("optimize")
    p_dbp = sub.add_parser("dbp")
    p_dbp.add_argument("--waveform", default=None)
    p_dbp.add_argument("--symbols", default=None)
    p_dbp.add_argument("--coeffs", default=None)
    sub.add_parser("sweep")
    sub.add_parser("cost")
    sub.add_parser("figure").add_argument("figure_id", choices=FIGURE_IDS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = ExperimentConfig.from_yaml(args.config)
    if args.threads is not None:
        cfg = replace(cfg, threads=args.threads)
    handler = {"simulate": cmd_simulate, "coeffs": cmd_coeffs,
               "optimize": cmd_optimize, "dbp": cmd_dbp, "sweep": cmd_sweep,
               "cost": cmd_cost, "figure": cmd_figure}[args.command]
    return handler(cfg, args)


if __name__ == "__main__":
    sys.exit(main())
