"""Command-line entry point: simulate, detect, reconstruct, sweep.

Exit codes: 0 success (or H0 from ``detect``), 3 H1, 2 usage or data error.
Every output file is a pure function of the flags and the seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from radarcoord.afriat import AfriatCertificate, eval_utility, reconstruct_utility
from radarcoord.core import (
    BudgetSpec,
    DatasetFormatError,
    NoiseModel,
    SimplexWeights,
    derive_seed,
    fmt,
    read_dataset,
    substream,
    write_dataset,
)
from radarcoord.detector import DEFAULT_L, phi_star, report_json, run_trial, decide, sample_psi
from radarcoord.forward import (
    DEFAULT_UTILITIES,
    DEFAULT_WEIGHTS,
    GenerationConfig,
    GenerationError,
    GenerationMode,
    add_noise,
    generate_coordinated,
    generate_noncoordinated,
)

EXIT_OK, EXIT_USAGE, EXIT_H1 = 0, 2, 3
DEFAULTS = {
    "T": 10,
    "M": 3,
    "n": 2,
    "sigma": 0.0,
    "sigma_assumed": None,
    "gamma": 0.1,
    "L": DEFAULT_L,
    "trials": 50,
    "seed": 0,
    "mode": GenerationMode.BUDGET_SHARE.value,
    "out": ".",
    "coordinated": True,
    "sigmas": [0.02, 0.05, 0.1, 0.2, 0.3],
    "workers": 1,
}
GRID_SIZE = 50
GRID_LOW, GRID_HIGH = 0.01, 1.0
REGIMES = ("coordinated", "noncoordinated")


class UsageError(Exception):
    pass


# -- configuration ----------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    # defaults are None so that a config file can fill unset flags
    p.add_argument("--config", type=Path, help="JSON file with flag values; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def _add_generation(p: argparse.ArgumentParser) -> None:
    p.add_argument("--T", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--mode", choices=[m.value for m in GenerationMode])


def _add_detection(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma-assumed", type=float, dest="sigma_assumed")
    p.add_argument("--gamma", type=float)
    p.add_argument("--L", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radarcoord", description="Coordination detection for radar networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate clean and noisy datasets")
    _add_common(sim)
    _add_generation(sim)
    sim.add_argument("--sigma", type=float)
    regime = sim.add_mutually_exclusive_group()
    regime.add_argument("--coordinated", dest="coordinated", action="store_const", const=True)
    regime.add_argument("--noncoordinated", dest="coordinated", action="store_const", const=False)

    det = sub.add_parser("detect", help="run the statistical detector on a dataset")
    det.add_argument("dataset", type=Path)
    _add_common(det)
    _add_detection(det)
    det.add_argument("--sigma", type=float, help="fallback for --sigma-assumed")

    rec = sub.add_parser("reconstruct", help="evaluate reconstructed utilities on a grid")
    rec.add_argument("dataset", type=Path)
    rec.add_argument("--report", type=Path, required=True)
    _add_common(rec)

    sw = sub.add_parser("sweep", help="mean statistic over a noise grid for both regimes")
    _add_common(sw)
    _add_generation(sw)
    _add_detection(sw)
    sw.add_argument("--sigmas", type=lambda s: [float(v) for v in s.split(",")], help="comma-separated grid")
    sw.add_argument("--trials", type=int)
    sw.add_argument("--workers", type=int)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the config file and explicit flags (in that order)."""
    opts = dict(DEFAULTS)
    if getattr(args, "config", None) is not None:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(doc) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        opts.update({k.replace("-", "_"): v for k, v in doc.items()})
    for key, val in vars(args).items():
        if key in DEFAULTS and val is not None:
            opts[key] = val
    _check(opts)
    return opts


def _check(o: dict) -> None:
    if min(o["T"], o["M"], o["n"]) < 1:
        raise UsageError("--T, --M and --n must be >= 1")
    if o["sigma"] < 0 or (o["sigma_assumed"] is not None and o["sigma_assumed"] < 0):
        raise UsageError("noise levels must be >= 0")
    if any(s < 0 for s in o["sigmas"]) or not o["sigmas"]:
        raise UsageError("--sigmas must be a nonempty list of values >= 0")
    if not 0 < o["gamma"] < 1:
        raise UsageError("--gamma must lie in (0, 1)")
    if o["L"] < 1 or o["trials"] < 1 or o["workers"] < 1:
        raise UsageError("--L, --trials and --workers must be >= 1")
    if not 0 <= o["seed"] < 2**64:
        raise UsageError("--seed must be a 64-bit unsigned integer")
    GenerationMode(o["mode"])


def generation_config(o: dict, seed: int) -> GenerationConfig:
    """Default utilities and weights, cycled when M differs from 3."""
    M = o["M"]
    utilities = tuple(DEFAULT_UTILITIES[i % 3] for i in range(M))
    weights = SimplexWeights.normalized([DEFAULT_WEIGHTS[i % 3] for i in range(M)])
    return GenerationConfig(o["T"], M, o["n"], utilities, weights, BudgetSpec(1.0), o["mode"], seed)


# -- commands --------------------------------------------------------------------


def cmd_simulate(o: dict) -> int:
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    seed = o["seed"]
    if o["coordinated"]:
        if o["n"] != 2:
            raise UsageError("coordinated generation needs --n 2")
        cfg = generation_config(o, seed)
        clean = generate_coordinated(cfg)
        generator = json.loads(cfg.to_json())
    else:
        clean = generate_noncoordinated(o["T"], o["M"], o["n"], substream(seed, 0))
        generator = None
    write_dataset(clean, out / "clean.csv")
    files = ["clean.csv"]
    if o["sigma"] > 0:
        noisy = add_noise(clean, NoiseModel(o["sigma"]), substream(seed, 1))
        write_dataset(noisy, out / "noisy.csv")
        files.append("noisy.csv")
    spend = np.einsum("tn,tn->t", clean.probes, clean.responses.sum(axis=1))
    saturation = float(np.max(np.abs(spend - 1.0)))
    meta = {
        "regime": REGIMES[0] if o["coordinated"] else REGIMES[1],
        "seed": seed,
        "sigma": o["sigma"],
        "generator": generator,
        "budget_saturation_error": float(fmt(saturation)) if o["coordinated"] else None,
        "files": files,
    }
    (out / "simulation.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    print(f"seed {seed}")
    if o["coordinated"]:
        print(f"budget saturation max |alpha'sum(beta) - 1| = {fmt(saturation)}")
    return EXIT_OK


def _simulation_meta(dataset: Path) -> dict | None:
    path = dataset.parent / "simulation.json"
    if not path.is_file():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return None


def cmd_detect(o: dict, dataset: Path) -> int:
    ds = read_dataset(dataset)
    sigma = o["sigma_assumed"]
    if sigma is None:
        meta = _simulation_meta(dataset)
        sigma = meta["sigma"] if meta is not None else o["sigma"]
    seed = o["seed"]
    cdf = sample_psi(ds.probes, ds.M, NoiseModel(sigma), o["L"], substream(seed, 2))
    stat = phi_star(ds)
    decision = decide(stat.phi_star, cdf, o["gamma"])
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report_json(stat, decision, o["L"], seed, sigma), encoding="utf-8")
    print(f"phi_star {fmt(stat.phi_star)} statistic {fmt(decision.statistic)} -> {decision.hypothesis.value}")
    return EXIT_OK if decision.hypothesis.value == "H0" else EXIT_H1


def _grid() -> np.ndarray:
    g = np.linspace(GRID_LOW, GRID_HIGH, GRID_SIZE)
    b1, b2 = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([b1.ravel(), b2.ravel()])


def _write_grid(path: Path, pts: np.ndarray, values: np.ndarray) -> None:
    lines = ["beta_1,beta_2,value"]
    lines += [f"{fmt(b[0])},{fmt(b[1])},{fmt(v)}" for b, v in zip(pts, values)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_reconstruct(o: dict, dataset: Path, report: Path) -> int:
    ds = read_dataset(dataset)
    if ds.n != 2:
        raise UsageError("grid reconstruction needs two-component responses")
    try:
        doc = json.loads(report.read_text(encoding="utf-8"))
        certs = [AfriatCertificate.from_json(c) for c in doc["certificates"]]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read report {report}: {exc}") from None
    if len(certs) != ds.M or sorted(c.agent for c in certs) != list(range(ds.M)):
        raise UsageError(f"report has {len(certs)} certificates, dataset has M={ds.M}")
    meta = _simulation_meta(dataset)
    generator = meta.get("generator") if meta else None
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    pts = _grid()
    files = []
    for cert in certs:
        U = reconstruct_utility(cert, ds)
        name = f"reconstructed_radar{cert.agent + 1}.csv"
        _write_grid(out / name, pts, eval_utility(U, pts))
        files.append(name)
        if generator is not None:
            true_name = f"true_radar{cert.agent + 1}.csv"
            _write_grid(out / true_name, pts, eval_utility(GenerationConfig.from_json(json.dumps(generator)).utilities[cert.agent], pts))
            files.append(true_name)
    label = "heuristic reconstruction" if ds.noisy else "exact rationalization"
    manifest = {"label": label, "grid": [GRID_LOW, GRID_HIGH, GRID_SIZE], "files": files}
    (out / "reconstruction.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(label)
    return EXIT_OK


# -- sweep -------------------------------------------------------------------------


def _sweep_task(job: tuple) -> float:
    o, regime, k, sigma = job
    s = derive_seed(o["seed"], REGIMES.index(regime), k)
    if regime == REGIMES[0]:
        clean = generate_coordinated(generation_config(o, s))
    else:
        clean = generate_noncoordinated(o["T"], o["M"], o["n"], substream(s, 0))
    assumed = NoiseModel(o["sigma_assumed"]) if o["sigma_assumed"] is not None else None
    return run_trial(clean, NoiseModel(sigma), o["gamma"], o["L"], s, assumed).statistic


def run_sweep(o: dict) -> list[tuple[float, str, float, float, int]]:
    """Rows ``(sigma, regime, mean, std, trials)`` in grid order.

    Trial k of a regime uses the same clean data and the same standard
    normal draws at every sigma, so the curves differ only through sigma.
    """
    jobs = [(o, r, k, s) for s in o["sigmas"] for r in REGIMES for k in range(o["trials"])]
    if o["workers"] > 1:
        with ProcessPoolExecutor(o["workers"]) as pool:
            stats = list(pool.map(_sweep_task, jobs, chunksize=8))
    else:
        stats = [_sweep_task(j) for j in jobs]
    arr = np.asarray(stats).reshape(len(o["sigmas"]), len(REGIMES), o["trials"])
    return [(s, r, float(arr[a, b].mean()), float(arr[a, b].std()), o["trials"])
            for a, s in enumerate(o["sigmas"]) for b, r in enumerate(REGIMES)]


def sweep_csv(rows) -> str:
    lines = ["sigma,regime,mean_statistic,std_statistic,trials"]
    lines += [f"{fmt(s)},{r},{fmt(m)},{fmt(sd)},{n}" for s, r, m, sd, n in rows]
    return "\n".join(lines) + "\n"


def cmd_sweep(o: dict) -> int:
    if o["n"] != 2:
        raise UsageError("coordinated generation needs --n 2")
    out = Path(o["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(sweep_csv(run_sweep(o)), encoding="utf-8")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        o = resolve(args)
        if args.command == "simulate":
            return cmd_simulate(o)
        if args.command == "detect":
            return cmd_detect(o, args.dataset)
        if args.command == "reconstruct":
            return cmd_reconstruct(o, args.dataset, args.report)
        return cmd_sweep(o)
    except UsageError as exc:
        parser.error(str(exc))
    except (DatasetFormatError, GenerationError, OSError, ValueError) as exc:
        print(f"radarcoord: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
