"""``geowalk`` command line: simulate | rate | verify | legendre.

Every run writes its outputs plus ``manifest.json`` into the output directory.
Numeric files depend only on the config and seed; timestamps live only in the
manifest.
"""
import argparse
import concurrent.futures
import csv
import dataclasses
import datetime
import hashlib
import io
import json
import os
import sys

from . import __version__
from .config import ConfigError, ExperimentConfig, canonical_number, default_verify_config
from .errors import GeowalkError, UnknownLemmaError
from .ldp import compare_rate, estimate_ball_rate, legendre_transform
from .lemmas import LEMMA_IDS, verify_lemma
from .walks import pullback_vectors, run_rescaled_walk, subdivide_walk

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


@dataclasses.dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    tool_version: str
    started: str
    finished: str = ""
    outputs: list = dataclasses.field(default_factory=list)

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), sort_keys=True, indent=2)


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


class _Writer:
    """Single writer for one run: records every file with its digest."""

    def __init__(self, out_dir, manifest):
        self.out_dir = out_dir
        self.manifest = manifest
        os.makedirs(out_dir, exist_ok=True)

    def text(self, name, content):
        path = os.path.join(self.out_dir, name)
        data = content.encode()
        with open(path, "wb") as fh:
            fh.write(data)
        self.manifest.outputs.append({"file": name, "sha256": hashlib.sha256(data).hexdigest(),
                                      "bytes": len(data)})
        return path

    def rows(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(header)
        w.writerows(rows)
        return self.text(name, buf.getvalue())

    def close(self):
        self.manifest.finished = _now()
        self.manifest.outputs.sort(key=lambda o: o["file"])
        with open(os.path.join(self.out_dir, "manifest.json"), "w") as fh:
            fh.write(self.manifest.to_json())


def _pmap(fn, items, jobs):
    """Ordered map; worker count never changes results because every item is seeded on its own."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*items)))


# --- simulate ------------------------------------------------------------------------

def _trajectory_csv(traj, with_pullback):
    dim = traj.points.shape[1]
    pulled = pullback_vectors(traj) if with_pullback else None
    header = (["k"] + [f"x{i + 1}" for i in range(dim)] + [f"X{i + 1}" for i in range(dim)]
              + [f"tX{i + 1}" for i in range(dim)])
    if with_pullback:
        header += [f"v{i + 1}" for i in range(dim)]
    rows = []
    for k, p in enumerate(traj.points):
        row = [k] + [canonical_number(a) for a in p]
        if k == 0:
            row += [""] * (2 * dim)
        else:
            row += [canonical_number(a) for a in traj.increments[k - 1]]
            row += [canonical_number(a) for a in traj.transported_increments[k - 1]]
        if with_pullback:
            row += [canonical_number(a) for a in pulled[k]]
        rows.append(row)
    return header, rows


def _simulate_one(cfg_dict, n, replica):
    cfg = ExperimentConfig(cfg_dict)
    traj = run_rescaled_walk(cfg.family, cfg.x0, n, cfg.seed, replica)
    walk = cfg.walk
    header, rows = _trajectory_csv(traj, walk["pullback"])
    sub = None
    if "m" in walk:
        sub = subdivide_walk(traj, walk["m"], walk.get("scheme", "walk-path")).to_json()
    return header, rows, sub


def cmd_simulate(cfg, writer, jobs=1):
    walk = cfg.walk
    if not walk["n"]:
        raise ConfigError("walk.n is empty; simulate needs at least one step count")
    items = [(cfg.raw, n, i) for n in walk["n"] for i in range(walk["replicas"])]
    for (_, n, i), (header, rows, sub) in zip(items, _pmap(_simulate_one, items, jobs)):
        writer.rows(f"walk_n{n}_rep{i:06d}.csv", header, rows)
        if sub is not None:
            writer.text(f"subdivision_n{n}_rep{i:06d}.json", sub)
    return EXIT_OK


# --- rate -----------------------------------------------------------------------------

def _rate_one(cfg_dict, index, target):
    cfg = ExperimentConfig(cfg_dict)
    report = estimate_ball_rate(cfg.family, cfg.x0, target, cfg.epsilon, cfg.walk["n"],
                                cfg.walk["replicas"], cfg.seed + index)
    return report


def cmd_rate(cfg, writer, jobs=1):
    if not cfg.walk["n"]:
        raise ConfigError("walk.n is empty; rate estimation needs at least one n")
    targets = cfg.target_points()
    if not targets:
        raise ConfigError("no targets given")
    items = [(cfg.raw, i, t.tolist()) for i, t in enumerate(targets)]
    tol = cfg.tolerance("rate", 0.2)
    code = EXIT_OK
    summary = []
    for i, report in enumerate(_pmap(_rate_one, items, jobs)):
        writer.text(f"rate_target{i:03d}.csv", report.to_csv())
        writer.text(f"rate_target{i:03d}.json", report.to_json())
        cmp = compare_rate(report, tol)
        summary.append([i, int(cmp.passed), cmp.reason])
        print(f"target {i}: {'pass' if cmp.passed else 'fail'} ({cmp.reason})")
        if not cmp.passed:
            code = EXIT_FAIL
    writer.rows("rate_summary.csv", ["target", "passed", "detail"], summary)
    return code


# --- verify ---------------------------------------------------------------------------

def _verify_one(lemma_id, manifold, overrides, seed):
    return verify_lemma(lemma_id, manifold, overrides, seed)


def cmd_verify(cfg, writer, lemma_ids=(), jobs=1):
    for lid in lemma_ids:
        if lid != "all" and lid not in LEMMA_IDS:
            raise UnknownLemmaError(lid)
    plan = cfg.lemma_plan(lemma_ids)
    items = [(lid, man, ov, cfg.seed) for lid, man, ov in plan]
    reports = _pmap(_verify_one, items, jobs)
    rows = []
    for rep in reports:
        name = f"lemma_{rep.lemma_id}_{rep.manifold_id.replace(':', '')}.json"
        writer.text(name, rep.to_json())
        rows.append(rep.summary_row())
        print(f"{rep.lemma_id:28s} {rep.manifold_id:12s} {rep.verdict}")
    writer.rows("lemma_summary.csv", ["lemma_id", "manifold", "order", "constant", "verdict"], rows)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


# --- legendre -------------------------------------------------------------------------

def cmd_legendre(cfg, writer, jobs=1):
    prof = cfg.family.profile
    rows = []
    for v in cfg.legendre_grid():
        res = legendre_transform(prof, v)
        rows.append([canonical_number(v), canonical_number(res.value),
                     canonical_number(res.argmax) if res.argmax is not None else ""])
    writer.rows("legendre.csv", ["v", "rate", "argmax"], rows)
    print("v\trate")
    for v, rate, _ in rows:
        print(f"{v}\t{rate}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "rate": cmd_rate, "verify": cmd_verify, "legendre": cmd_legendre}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config (JSON)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, metavar="N", help="master seed (overrides the config)")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes")
    parser = argparse.ArgumentParser(prog="geowalk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"geowalk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write walk trajectories")
    sub.add_parser("rate", parents=[common], help="Monte-Carlo ball rates vs the rate function")
    p = sub.add_parser("verify", parents=[common], help="run lemma experiments")
    p.add_argument("lemmas", nargs="*", metavar="LEMMA", help="lemma ids or 'all'")
    sub.add_parser("legendre", parents=[common], help="tabulate the rate profile of a family")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            cfg = ExperimentConfig.load(args.config)
        elif args.command == "verify":
            cfg = default_verify_config()
        else:
            parser.error(f"{args.command} needs --config")
        cfg = cfg.with_overrides(seed=args.seed, output=args.out)
        if args.command == "verify":
            for lid in args.lemmas:
                if lid != "all" and lid not in LEMMA_IDS:
                    parser.error(f"unknown lemma id {lid!r}; known: all, {', '.join(LEMMA_IDS)}")
        manifest = RunManifest(args.command, cfg.hash, cfg.seed, __version__, _now())
        writer = _Writer(cfg.output, manifest)
        extra = {"lemma_ids": args.lemmas} if args.command == "verify" else {}
        code = COMMANDS[args.command](cfg, writer, jobs=max(1, args.jobs), **extra)
        # the output directory is left out so reruns elsewhere stay byte-identical
        writer.text("config.json", json.dumps({k: v for k, v in cfg.raw.items() if k != "output"},
                                              sort_keys=True, indent=2))
        writer.close()
        return code
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"geowalk: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GeowalkError as exc:
        print(f"geowalk: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
