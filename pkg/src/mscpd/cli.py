"""Command-line interface.

Exit codes: 0 on success, 2 for configuration errors, 3 for data errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import io as mio
from .errors import ConfigError, DataError, InvalidInputError
from .grid import build_grid

log = logging.getLogger("mscpd")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: str | None = None
    output: str | None = None
    sigma: float = 1.0
    delta: float = 0.1
    grid: str | None = None
    noise: str = "gaussian"
    L: float | None = None
    constants: dict | None = None
    seed: int = 0
    threads: int | None = None
    algorithm: str = "v1"

    def validate(self) -> "RunConfig":
        if not self.sigma > 0:
            raise ConfigError(f"--sigma must be positive, got {self.sigma}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"--delta must lie in (0, 1), got {self.delta}")
        if self.noise not in ("gaussian", "subgaussian"):
            raise ConfigError(f"--noise must be gaussian or subgaussian, got {self.noise!r}")
        if self.L is not None and self.noise != "subgaussian":
            raise ConfigError("--L only applies with --noise subgaussian")
        if self.L is not None and not self.L > 0:
            raise ConfigError(f"--L must be positive, got {self.L}")
        if self.threads is not None and self.threads < 1:
            raise ConfigError(f"--threads must be positive, got {self.threads}")
        return self

    def grid_kind(self) -> str:
        return self.grid or ("complete" if self.noise == "subgaussian" else "dyadic")

    def test_config(self, n: int, p: int):
        """Gaussian or sub-Gaussian test configuration for an ``n x p`` series."""
        from .gaussian import GaussianTestConfig
        from .subgaussian import SubGaussianTestConfig

        try:
            grid = build_grid(n, self.grid_kind())
            if self.noise == "gaussian":
                return GaussianTestConfig(n, p, self.sigma, self.delta, grid)
            c = self.constants or {}
            return SubGaussianTestConfig(
                n, p, self.sigma, self.delta, L=self.L,
                c_dense=float(c.get("c_dense", 4.0)), c_partial=float(c.get("c_partial", 4.0)),
                grid=grid,
            )
        except InvalidInputError as exc:
            raise ConfigError(str(exc)) from None


def _load_json(path, what: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path} is not valid JSON: {exc}") from None


def _require(value, flag: str):
    if value is None:
        raise ConfigError(f"{flag} is required")
    return value


# ---------------------------------------------------------------- commands


def cmd_detect(cfg: RunConfig) -> int:
    from .detect import detect

    series = mio.read_series_csv(_require(cfg.input, "--input"))
    out = Path(_require(cfg.output, "--output"))
    tcfg = cfg.test_config(series.n, series.p)
    table_path = out.with_name(out.stem + ".calibration.json")
    table_path.write_text(tcfg.table.to_json() + "\n", encoding="utf-8")
    log.info("calibration table written to %s", table_path)
    t0 = time.perf_counter()
    seg = detect(series, tcfg, algorithm=cfg.algorithm, threads=cfg.threads)
    log.info("detection took %.3f s", time.perf_counter() - t0)
    out.write_text(seg.to_json() + "\n", encoding="utf-8")
    print(f"K_hat = {seg.K_hat}; segmentation written to {out}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, seed_given: bool = False) -> int:
    from .simulation import Scenario, realize

    data = _load_json(_require(cfg.input, "--input"), "scenario")
    if seed_given or "seed" not in data:
        data["seed"] = cfg.seed
    scen = Scenario.from_dict(data)
    out = Path(_require(cfg.output, "--output"))
    out.mkdir(parents=True, exist_ok=True)
    truth, theta, series = realize(scen)
    mio.write_matrix_csv(out / "Y.csv", series.data)
    mio.write_matrix_csv(out / "theta.csv", theta)
    info = {**truth.to_dict(), "delta_k": truth.delta, "r_k": truth.r, "s_k": truth.s,
            "scenario": scen.to_dict()}
    mio.write_json(out / "truth.json", info)
    print(f"K = {truth.K}; wrote Y.csv, theta.csv, truth.json to {out}")
    return EXIT_OK


def cmd_bench(cfg: RunConfig) -> int:
    """Run a campaign described by a JSON file.

    Keys: ``kind`` (fwer or power), ``n``, ``p``, ``runs``, optional
    ``noise_model`` (data noise; default gaussian), ``tau``/``mus`` or
    ``prior`` for power campaigns.  Flags override sigma, delta, grid, noise
    family, seed and threads.
    """
    from .evaluation import run_fwer_campaign, run_power_campaign
    from .simulation import EnergyConstants, GroundTruth, NOISE_MODELS

    spec = _load_json(_require(cfg.input, "--input"), "campaign")
    try:
        kind = spec["kind"]
        n, p, runs = int(spec["n"]), int(spec["p"]), int(spec.get("runs", 100))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"campaign file needs kind, n, p: {exc}") from None
    model = spec.get("noise_model", "gaussian")
    if model not in NOISE_MODELS:
        raise ConfigError(f"unknown noise_model {model!r}")
    tcfg = cfg.test_config(n, p)
    if kind == "fwer":
        summ = run_fwer_campaign(tcfg, model, runs, cfg.seed, algorithm=cfg.algorithm,
                                 threads=cfg.threads)
    elif kind == "power":
        consts = EnergyConstants.from_dict(cfg.constants or {})
        try:
            if "prior" in spec:
                truth = dict(spec["prior"])
            else:
                truth = GroundTruth(n, p, tuple(spec["tau"]), spec["mus"])
        except (KeyError, InvalidInputError) as exc:
            raise ConfigError(f"invalid power campaign truth: {exc}") from None
        summ = run_power_campaign(tcfg, truth, runs, cfg.seed, noise=model, constants=consts,
                                  algorithm=cfg.algorithm, threads=cfg.threads)
    else:
        raise ConfigError(f"campaign kind must be fwer or power, got {kind!r}")
    out = Path(_require(cfg.output, "--output"))
    out.parent.mkdir(parents=True, exist_ok=True)
    json_path = out.with_suffix(".json")
    csv_path = out.with_suffix(".csv")
    json_path.write_text(summ.to_json() + "\n", encoding="utf-8")
    mio.write_records_csv(csv_path, summ.records)
    print(summ.one_line())
    return EXIT_OK


def cmd_calibrate(cfg: RunConfig, args) -> int:
    from .calibration import calibrate_energy, calibrate_thresholds

    out = Path(_require(cfg.output, "--output"))
    thr = calibrate_thresholds(args.n, args.p, sigma=cfg.sigma, delta=cfg.delta,
                               noise=args.noise_model, L=cfg.L, grid=cfg.grid or "complete",
                               runs=args.runs, seed=cfg.seed)
    en = calibrate_energy(args.n, args.p, sigma=cfg.sigma, delta=cfg.delta,
                          grid="dyadic", runs=args.energy_runs, seed=cfg.seed)
    result = {**thr.constants, **en.constants,
              "evidence": {"thresholds": thr.evidence, "energy": en.evidence}}
    mio.write_json(out, result)
    print(f"c_dense = c_partial = {thr.constants['c_dense']:.4f}, c0 = {en.constants['c0']:g}; "
          f"written to {out}")
    return EXIT_OK


def cmd_theorem1(cfg: RunConfig, args) -> int:
    from .harness import run_theorem1_suite

    res = run_theorem1_suite(args.n_min, args.n_max, seed=cfg.seed)
    if cfg.output:
        mio.write_json(cfg.output, res.to_dict())
    status = "PASS" if res.passed else "FAIL"
    print(f"{status}: {res.instances} instances, {len(res.failures)} failures, {res.seconds:.1f} s")
    return EXIT_OK if res.passed else 1


# ---------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="input file (CSV for detect, JSON otherwise)")
    common.add_argument("--output", help="output path")
    common.add_argument("--sigma", type=float, default=1.0, help="noise standard deviation")
    common.add_argument("--delta", type=float, default=0.1, help="error level in (0, 1)")
    common.add_argument("--grid", help="dyadic, complete or adic:<a> (default depends on --noise)")
    common.add_argument("--noise", default="gaussian", choices=["gaussian", "subgaussian"],
                        help="test family")
    common.add_argument("--L", type=float, help="sub-Gaussian norm bound (subgaussian only)")
    common.add_argument("--constants", help="JSON file with c_dense, c_partial, c0, kappa_d, kappa_s")
    common.add_argument("--seed", type=int, help="master seed (default 0; overrides a scenario seed)")
    common.add_argument("--threads", type=int, help="worker threads (default: $CPD_THREADS or 1)")
    common.add_argument("--algorithm", default="v1", choices=["v1", "v2"], help="aggregation variant")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mscpd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("detect", parents=[common], help="detect change-points in a CSV series")
    sub.add_parser("simulate", parents=[common], help="generate data from a scenario file")
    sub.add_parser("bench", parents=[common], help="run an FWER or power campaign")
    cal = sub.add_parser("calibrate", parents=[common], help="fit numerical constants by Monte-Carlo")
    cal.add_argument("--n", type=int, default=128)
    cal.add_argument("--p", type=int, default=8)
    cal.add_argument("--runs", type=int, default=200)
    cal.add_argument("--energy-runs", type=int, default=40)
    cal.add_argument("--noise-model", default="gaussian",
                     choices=["gaussian", "scaled_rademacher", "uniform"])
    th = sub.add_parser("theorem1-suite", parents=[common], help="run the exhaustive aggregation check")
    th.add_argument("--n-min", type=int, default=6)
    th.add_argument("--n-max", type=int, default=24)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        constants = _load_json(args.constants, "constants file") if args.constants else None
        cfg = RunConfig(
            command=args.command, input=args.input, output=args.output, sigma=args.sigma,
            delta=args.delta, grid=args.grid, noise=args.noise, L=args.L, constants=constants,
            seed=args.seed if args.seed is not None else 0, threads=args.threads, algorithm=args.algorithm,
        ).validate()
        if args.command == "detect":
            return cmd_detect(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.seed is not None)
        if args.command == "bench":
            return cmd_bench(cfg)
        if args.command == "calibrate":
            return cmd_calibrate(cfg, args)
        return cmd_theorem1(cfg, args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, InvalidInputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
