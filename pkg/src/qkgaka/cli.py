"""Command-line front end.

Every command writes its data files plus one ``manifest.json`` into the
output directory (``--out``, else ``$QKGAKA_OUT``, else ``./out``).
``qkgaka rerun <dir>/manifest.json`` re-executes the recorded command into a
fresh directory and compares output hashes.

Exit codes: 0 success, 1 domain failure (detection abort, auth failure,
rerun mismatch), 2 usage, 3 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import statistics
import sys
import tempfile
import time
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from . import aka_sim, key_hierarchy, lifetime_model, qk_grid, qkd_link
from .errors import (
    ConfigurationError,
    DomainError,
    FormatError,
    KeyEstablishmentError,
    NumericalError,
    StateError,
)

log = logging.getLogger("qkgaka")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
OUT_ENV = "QKGAKA_OUT"
MANIFEST = "manifest.json"


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    """Output directory bookkeeping for one command invocation."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.out = Path(args.out or os.environ.get(OUT_ENV) or "out")
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.config_digest = None
        self.seeds = {"seed": args.seed}
        self.summary: dict = {}
        self.nondeterministic: list[str] = []
        self.started = datetime.now(timezone.utc).isoformat()

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def write_manifest(self, exit_code: int) -> None:
        manifest = {
            "tool": "qkgaka",
            "version": _version(),
            "command": self.args.command,
            "argv": self.argv,
            "config_digest": self.config_digest,
            "seeds": self.seeds,
            "outputs": [{"path": f, "sha256": _sha256(self.out / f)} for f in self.files
                        if (self.out / f).exists()],
            "nondeterministic_outputs": self.nondeterministic,
            "summary": self.summary,
            "exit_code": exit_code,
            "started_at": self.started,
            "finished_at": datetime.now(timezone.utc).isoformat(),
        }
        (self.out / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# --- commands -------------------------------------------------------------


def cmd_qkd(run: Run) -> int:
    a = run.args
    cfg = qkd_link.ChannelConfig(a.photons, a.noise, a.eve, a.seed)
    ex = qkd_link.run_exchange(cfg, a.sample_fraction, a.threshold)
    qkd_link.write_transcript_csv(ex, run.path("transcript.csv"))
    hex_key, nbits = qkd_link.bits_to_hex(ex.key.final_sender if ex.accepted else np.empty(0, np.uint8))
    run.path("key.hex").write_text(f"{nbits} {hex_key}\n")
    run.summary = {"decision": ex.decision.value, "retention": ex.key.retention,
                   "qber": ex.key.qber, "final_bits": nbits}
    print(f"decision={ex.decision.value} retention={ex.key.retention:.4f} qber={ex.key.qber} final_bits={nbits}")
    return EXIT_OK if ex.accepted else EXIT_DOMAIN


def _build_grid(a) -> qk_grid.QkGrid:
    cfg = qkd_link.ChannelConfig(a.photons, a.noise, a.eve, a.seed)
    return qk_grid.run_grid_generation(cfg, a.n, retries=a.retries, threshold=a.threshold)


def cmd_grid(run: Run) -> int:
    grid = _build_grid(run.args)
    run.path("grid.qkg").write_bytes(qk_grid.serialize(grid))
    run.path("grid.txt").write_text(qk_grid.hexdump(grid))
    run.summary = {"n": grid.n, "total_bits": grid.total_bits, "source_digest": grid.source_digest}
    print(f"grid n={grid.n} bits={grid.total_bits} digest={grid.source_digest}")
    return EXIT_OK


def cmd_keys(run: Run) -> int:
    a = run.args
    if a.grid:
        grid = qk_grid.deserialize(Path(a.grid).read_bytes())
    else:
        grid = _build_grid(a)
    if a.prek:
        pre_k, _ = key_hierarchy.read_key_store(a.prek)
    else:
        pre_k = key_hierarchy.PreK.bootstrap(np.random.Generator(np.random.PCG64([a.seed, 1])))
    ctx = key_hierarchy.DerivationContext(a.sn_id.encode(), a.nas_count, a.algorithm_id)
    k, nxt = key_hierarchy.derive_master_key(grid, pre_k)
    chain = key_hierarchy.derive_key_chain(k, ctx)
    run.path("golden.txt").write_text(key_hierarchy.format_golden(key_hierarchy.golden_vectors(k, ctx, a.nh_steps)))
    key_hierarchy.write_key_store(run.path("keystore.bin"), nxt, chain)
    run.summary = {"generation": nxt.generation, "k_fingerprint": key_hierarchy.fingerprint(k)}
    print(f"derived generation {pre_k.generation} -> {nxt.generation}; K {key_hierarchy.fingerprint(k)}")
    return EXIT_OK


def _scenario(run: Run) -> aka_sim.Scenario:
    a = run.args
    if a.config:
        cfg, run.config_digest = aka_sim.load_config(a.config)
    else:
        cfg = {}
    if a.seed is not None:
        cfg = {**cfg, "seed": a.seed}
    run.seeds["seed"] = cfg.get("seed", 0)
    return aka_sim.scenario_from_config(cfg)


def cmd_aka(run: Run) -> int:
    a = run.args
    scenario = _scenario(run)
    if a.attack:
        t = aka_sim.run_attack(scenario, a.attack)
        run.path("transcript.json").write_text(t.to_json())
        run.summary = {"attack": a.attack, "outcome": t.outcome.value, "elapsed_ms": t.elapsed_ms}
        print(f"attack={a.attack} outcome={t.outcome.value}")
        return EXIT_OK if t.outcome is aka_sim.Outcome.SUCCESS else EXIT_DOMAIN
    schemes = [s.strip() for s in a.scheme.split(",") if s.strip()]
    for s in schemes:
        if s not in aka_sim.SCHEMES:
            raise ConfigurationError(f"unknown scheme {s!r}; choose from {sorted(aka_sim.SCHEMES)}")
    curves = [aka_sim.run_batch(s, a.n_auth, scenario) for s in schemes]
    aka_sim.write_load_curve_csv(curves, run.path("load_curve.csv"))
    failures = {c.scheme: sum(t.outcome is not aka_sim.Outcome.SUCCESS for t in c.transcripts) for c in curves}
    run.summary = {c.scheme: {"elapsed_ms_total": c.rows[-1]["elapsed_ms_cumulative"],
                              "hss_msgs": c.rows[-1]["hss_msgs"], "mme_msgs": c.rows[-1]["mme_msgs"],
                              "failures": failures[c.scheme]} for c in curves}
    for c in curves:
        r = c.rows[-1]
        print(f"{c.scheme}: {a.n_auth} auths, {r['elapsed_ms_cumulative']:.3f} ms, "
              f"hss={r['hss_msgs']} mme={r['mme_msgs']} failures={failures[c.scheme]}")
    return EXIT_DOMAIN if any(failures.values()) else EXIT_OK


def _dist(kind: str, mean: float, samples: str | None) -> lifetime_model.ExpiryDistribution:
    if kind in ("exp", "exponential"):
        return lifetime_model.ExpiryDistribution.exponential(mean)
    if kind in ("det", "deterministic"):
        return lifetime_model.ExpiryDistribution.deterministic(mean)
    if kind in ("emp", "empirical"):
        if not samples:
            raise ConfigurationError("empirical expiry needs --samples")
        return lifetime_model.ExpiryDistribution.empirical(float(x) for x in samples.split(","))
    raise ConfigurationError(f"unknown distribution {kind!r}")


def _lifetime_params_from_config(run: Run) -> list[lifetime_model.LifetimeParams]:
    cfg, run.config_digest = aka_sim.load_config(run.args.config)
    t_s = float(cfg.get("T_s", 10.0))
    sets = cfg.get("params")
    if not isinstance(sets, list) or not sets:
        raise FormatError(f"{run.args.config}: expected a nonempty 'params' list")
    out = []
    for p in sets:
        try:
            dist = _dist(str(p["dist"]), float(p.get("mean", 1.0)),
                         ",".join(str(x) for x in p.get("samples", [])) or None)
            out.append(lifetime_model.LifetimeParams(float(p["lambda"]), float(p["phi"]), float(p["t_h"]),
                                                     float(p.get("T_s", t_s)), dist))
        except (KeyError, TypeError) as e:
            raise FormatError(f"{run.args.config}: bad parameter set {p!r}: {e}") from None
    return out


def cmd_lifetime(run: Run) -> int:
    a = run.args
    if a.config:
        params = _lifetime_params_from_config(run)
    elif a.sweep:
        params = lifetime_model.default_sweep_params(a.Ts)
    else:
        params = [lifetime_model.LifetimeParams(a.lam, a.phi, a.th, a.Ts, _dist(a.dist, a.mean, a.samples))]
    rows = lifetime_model.sweep(params, a.trials, a.seed)
    lifetime_model.write_sweep_csv(rows, run.path("sweep.csv"))
    worst = max(abs(r["p_dkga_analytic"] - r["p_dkga_mc"]) / max(r["mc_stderr"], 1e-12) for r in rows)
    run.summary = {"param_sets": len(rows), "max_abs_z": worst}
    for r in rows[:10]:
        print(f"lambda={r['lambda']} phi={r['phi']} t_h={r['t_h']} {r['dist_kind']}({r['dist_mean']}): "
              f"p_dkga_analytic={r['p_dkga_analytic']:.8f} p_dkga_mc={r['p_dkga_mc']:.6f}")
    if len(rows) > 10:
        print(f"... {len(rows) - 10} more rows in sweep.csv")
    return EXIT_OK


def cmd_bench(run: Run) -> int:
    a = run.args
    grid = _build_grid(a)
    rng = np.random.Generator(np.random.PCG64([a.seed, 2]))
    series = {"qkg": [], "plain": []}
    for i in range(a.warmup + a.iterations):
        pre_k = key_hierarchy.PreK(rng.bytes(32), i)
        t0 = time.perf_counter()
        key_hierarchy.derive_master_key(grid, pre_k)
        t1 = time.perf_counter()
        key_hierarchy.kdf(key_hierarchy.LABEL_K, os.urandom(32), length=32)
        t2 = time.perf_counter()
        if i >= a.warmup:
            series["qkg"].append(t1 - t0)
            series["plain"].append(t2 - t1)
    path = run.path("bench.csv")
    lines = ["iteration,qkg_seconds,plain_seconds"]
    lines += [f"{i},{q!r},{p!r}" for i, (q, p) in enumerate(zip(series["qkg"], series["plain"]))]
    path.write_text("\n".join(lines) + "\n")
    run.nondeterministic.append("bench.csv")
    med = {k: statistics.median(v) for k, v in series.items()}
    run.summary = {"median_seconds": med, "iterations": a.iterations, "warmup": a.warmup}
    print(f"median per 256-bit key: qkg={med['qkg'] * 1e6:.1f} us plain={med['plain'] * 1e6:.1f} us")
    return EXIT_OK


def cmd_rerun(args) -> int:
    src = Path(args.manifest)
    manifest = json.loads(src.read_text())
    out = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="qkgaka-rerun-"))
    argv = _replace_out(manifest["argv"], str(out))
    code = main(argv)
    skip = set(manifest.get("nondeterministic_outputs", []))
    mismatched = []
    for entry in manifest["outputs"]:
        if entry["path"] in skip:
            continue
        f = out / entry["path"]
        if not f.exists() or _sha256(f) != entry["sha256"]:
            mismatched.append(entry["path"])
    if code != manifest.get("exit_code", code):
        mismatched.append(f"exit code {code} != {manifest['exit_code']}")
    if mismatched:
        print(f"rerun into {out} differs: {', '.join(mismatched)}")
        return EXIT_DOMAIN
    print(f"rerun into {out}: {len(manifest['outputs']) - len(skip)} outputs byte-identical")
    return EXIT_OK


def _replace_out(argv: list[str], out: str) -> list[str]:
    res, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--out":
            skip = True
            continue
        if tok.startswith("--out="):
            continue
        res.append(tok)
    return res + ["--out", out]


# --- argument parsing -----------------------------------------------------


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {s}")
    return v


def _probability(s: str) -> float:
    v = float(s)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {s}")
    return v


def _positive_float(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {s}")
    return v


def _odd_side(s: str) -> int:
    v = int(s)
    if v < 3 or v % 2 == 0:
        raise argparse.ArgumentTypeError(f"grid side must be odd and >= 3, got {s}")
    return v


def _channel_flags(p, photons: int) -> None:
    p.add_argument("--photons", type=_positive_int, default=photons)
    p.add_argument("--noise", type=_probability, default=0.0, help="channel bit-flip probability")
    p.add_argument("--eve", type=_probability, default=0.0, help="intercept-resend fraction")
    p.add_argument("--threshold", type=_probability, default=qkd_link.DEFAULT_THRESHOLD,
                   help=f"abort when sampled QBER exceeds this (default {qkd_link.DEFAULT_THRESHOLD})")


def _grid_flags(p) -> None:
    _channel_flags(p, 16384)
    p.add_argument("--n", type=_odd_side, default=5, help="grid side (odd, >= 3)")
    p.add_argument("--retries", type=int, default=3, help="aborted exchanges tolerated")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkgaka", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text, seed_default=0):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=seed_default)
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
        return p

    p = command("qkd", "run one QKD exchange")
    _channel_flags(p, 100_000)
    p.add_argument("--sample-fraction", type=_probability, default=qkd_link.DEFAULT_SAMPLE_FRACTION)

    p = command("grid", "build and serialize a QK-GRID")
    _grid_flags(p)

    p = command("keys", "derive K and its key chain, write golden vectors and a key store")
    _grid_flags(p)
    p.add_argument("--grid", help="serialized grid to use instead of building one")
    p.add_argument("--prek", help="key store holding the current Pre-K")
    p.add_argument("--sn-id", default="00101", help="serving network id")
    p.add_argument("--nas-count", type=int, default=0)
    p.add_argument("--algorithm-id", type=int, default=2)
    p.add_argument("--nh-steps", type=int, default=3)

    p = command("aka", "run AKA batches or an attack scenario", seed_default=None)
    p.add_argument("--config", help="scenario YAML")
    p.add_argument("--scheme", default="qkg,eps", help="comma list of qkg, eps, se")
    p.add_argument("--n-auth", type=_positive_int, default=50)
    p.add_argument("--attack", choices=[k for k in aka_sim.ATTACKS if k != "none"])

    p = command("lifetime", "evaluate P_DKGA analytically and by Monte Carlo")
    p.add_argument("--config", help="YAML with a 'params' list")
    p.add_argument("--sweep", action="store_true", help="run the built-in 24-set sweep")
    p.add_argument("--dist", default="exp", choices=["exp", "det", "emp"])
    p.add_argument("--mean", type=float, default=1.0, help="exp mean or det value")
    p.add_argument("--samples", help="comma list for --dist emp")
    p.add_argument("--lambda", dest="lam", type=_positive_float, default=2.0)
    p.add_argument("--phi", type=_positive_float, default=1.0)
    p.add_argument("--th", type=_positive_float, default=1.0)
    p.add_argument("--Ts", type=_positive_float, default=10.0, help="session duration")
    p.add_argument("--trials", type=int, default=1_000_000)

    p = command("bench", "time 256-bit key generation, QKG path vs plain KDF")
    _grid_flags(p)
    p.add_argument("--iterations", type=int, default=30)
    p.add_argument("--warmup", type=int, default=5)

    p = sub.add_parser("rerun", help="re-execute a command from its manifest and compare outputs")
    p.add_argument("manifest")
    p.add_argument("--out", help="directory for the rerun (default: a new temp dir)")
    return parser


COMMANDS = {"qkd": cmd_qkd, "grid": cmd_grid, "keys": cmd_keys, "aka": cmd_aka,
            "lifetime": cmd_lifetime, "bench": cmd_bench}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "rerun":
        try:
            return cmd_rerun(args)
        except (OSError, ValueError, KeyError) as e:
            print(f"error: cannot rerun from {args.manifest}: {e}", file=sys.stderr)
            return EXIT_IO
    if args.command == "bench" and args.iterations < 30:
        print("usage error: --iterations must be at least 30", file=sys.stderr)
        return EXIT_USAGE

    try:
        run = Run(args, argv)
    except OSError as e:
        print(f"error: cannot create output directory: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        code = COMMANDS[args.command](run)
    except (KeyEstablishmentError, StateError) as e:
        print(f"failure: {e}", file=sys.stderr)
        code = EXIT_DOMAIN
    except (DomainError, ConfigurationError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as e:
        print(f"failure: {e}", file=sys.stderr)
        code = EXIT_DOMAIN
    except FormatError as e:
        print(f"format error: {e}", file=sys.stderr)
        return EXIT_IO
    except OSError as e:
        print(f"I/O error: {e.filename or ''}: {e.strerror or e}", file=sys.stderr)
        return EXIT_IO
    run.write_manifest(code)
    return code


if __name__ == "__main__":
    sys.exit(main())
