"""Command-line pipeline: checkpointed stages from raw archive to selection.

Stages and the checkpoints they read and write (under the output root)::

    ingest-check   archive files          -> ingest/
    detect-events  ingest/                -> events/candidates.txt, categories.csv
    sample-events  events/                -> events/event_set.txt
    features       ingest/, events/       -> features/features.csv
    score          ingest/, features/     -> scores/<tag>/
    select         scores/<tag>/          -> selection/<tag>/
    benchmark      ingest/, scores/<tag>/ -> benchmark/benchmark.csv
    simulate       (none)                 -> simulate/

Exit codes: 0 success, 1 configuration error, 2 missing checkpoint.
"""

from __future__ import annotations

import argparse
import configparser
import glob
import hashlib
import json
import logging
import os
import sys
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import evaldefs, events, features, ingest, minimet, redundancy, selection

logger = logging.getLogger("vpscore")

OUTPUT_ENV = "VPSCORE_OUTPUT"
DEFAULT_OUTPUT = "vpscore-out"
STAGES = ("ingest-check", "detect-events", "sample-events", "features", "score", "select",
          "benchmark", "simulate")
STRATEGY_ALIASES = {"random": "random", "distance": "distance_based",
                    "distance_based": "distance_based", "greedy": "greedy_specific",
                    "greedy_specific": "greedy_specific"}


class ConfigError(ValueError):
    def __init__(self, field_path, message):
        super().__init__(f"{field_path}: {message}")
        self.field_path = field_path


class MissingCheckpointError(RuntimeError):
    def __init__(self, path, stage):
        super().__init__(f"missing checkpoint {path}; run stage '{stage}' first")
        self.stage = stage


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PipelineConfig:
    updates: list = field(default_factory=list)
    ribs: list = field(default_factory=list)
    relationships: str | None = None
    tier1: list = field(default_factory=list)
    hypergiants: list = field(default_factory=list)
    start: int = 0
    end: int = 0
    periods: int = events.DEFAULT_PERIODS
    per_period: int = events.DEFAULT_PER_PERIOD
    window: int = events.WINDOW
    max_attempts: int = events.DEFAULT_MAX_ATTEMPTS
    sampling: str = "balanced"
    alpha: float = 0.25
    budget: float | None = None
    tag: str = "default"
    seed: int = 0
    jobs: int = 1
    output: str | None = None


def _get(cp, section, key, conv, default, check=None, why=""):
    path = f"{section}.{key}"
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key).strip()
    if raw == "" and default is None:
        return None
    try:
        val = conv(raw)
    except (TypeError, ValueError):
        raise ConfigError(path, f"cannot parse {raw!r}") from None
    if check is not None and not check(val):
        raise ConfigError(path, why or f"value {raw!r} out of range")
    return val


def _split(raw) -> list:
    return [x.strip() for x in raw.replace("\n", ",").split(",") if x.strip()]


def _int_list(raw) -> list:
    return [int(x) for x in _split(raw)]


def _paths(cp, section, key, base: Path) -> list:
    if not cp.has_option(section, key):
        return []
    out = []
    for pat in _split(cp.get(section, key)):
        full = pat if os.path.isabs(pat) else str(base / pat)
        hits = sorted(glob.glob(full))
        if not hits:
            raise ConfigError(f"{section}.{key}", f"no file matches {pat!r}")
        out.extend(hits)
    return out


def load_config(path) -> PipelineConfig:
    """Read an INI-style config (``[section]`` and ``key = value`` lines)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    cp = configparser.ConfigParser()
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError("config", str(exc).splitlines()[0]) from None
    base = path.parent
    cfg = PipelineConfig()
    cfg.updates = _paths(cp, "archive", "updates", base)
    cfg.ribs = _paths(cp, "archive", "ribs", base)
    rels = _paths(cp, "categories", "relationships", base)
    cfg.relationships = rels[0] if rels else None
    cfg.tier1 = _get(cp, "categories", "tier1", _int_list, [])
    cfg.hypergiants = _get(cp, "categories", "hypergiants", _int_list, [])
    cfg.start = _get(cp, "timeframe", "start", int, 0)
    cfg.end = _get(cp, "timeframe", "end", int, 0)
    if cp.has_option("timeframe", "end") and cfg.end <= cfg.start:
        raise ConfigError("timeframe.end", "must be greater than timeframe.start")
    cfg.periods = _get(cp, "events", "periods", int, cfg.periods, lambda v: v >= 1, "must be >= 1")
    cfg.per_period = _get(cp, "events", "per_period", int, cfg.per_period, lambda v: v >= 1,
                          "must be >= 1")
    cfg.window = _get(cp, "events", "window", int, cfg.window, lambda v: v > 0, "must be > 0")
    cfg.max_attempts = _get(cp, "events", "max_attempts", int, cfg.max_attempts,
                            lambda v: v >= 1, "must be >= 1")
    cfg.sampling = _get(cp, "events", "sampling", str, cfg.sampling,
                        lambda v: v in ("balanced", "random"), "must be balanced or random")
    if cfg.sampling == "balanced" and cfg.per_period != len(events.CATEGORY_PAIRS):
        raise ConfigError("events.per_period",
                          f"balanced sampling needs {len(events.CATEGORY_PAIRS)} events per period")
    cfg.alpha = _get(cp, "selection", "alpha", float, cfg.alpha, lambda v: 0 < v <= 1,
                     "must be in (0, 1]")
    cfg.budget = _get(cp, "selection", "budget", float, None, lambda v: v > 0, "must be > 0")
    cfg.tag = _get(cp, "selection", "tag", str, cfg.tag, lambda v: v != "", "must not be empty")
    cfg.seed = _get(cp, "pipeline", "seed", int, 0, lambda v: v >= 0, "must be >= 0")
    cfg.jobs = _get(cp, "pipeline", "jobs", int, 1, lambda v: v >= 1, "must be >= 1")
    out = _get(cp, "pipeline", "output", str, None)
    if out is not None:
        cfg.output = out if os.path.isabs(out) else str(base / out)
    return cfg


def substream(seed: int, name: str, *extra: int) -> int:
    """Independent, reproducible integer seed for a named consumer."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode()), *map(int, extra)])
    return int(ss.generate_state(1)[0])


# ---------------------------------------------------------------------------
# artifacts


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write(path: Path, write) -> Path:
    """Call ``write(fh)`` on a temp file next to ``path`` then rename it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_manifest(stage_dir: Path, stage, seed, params, inputs, outputs, root: Path) -> Path:
    def rel(p):
        p = Path(p)
        try:
            return p.resolve().relative_to(root.resolve()).as_posix()
        except ValueError:
            return str(p)

    doc = {
        "stage": stage,
        "tool_version": __version__,
        "seed": seed,
        "params": params,
        "inputs": {rel(p): _sha256(p) for p in inputs},
        "outputs": {rel(p): _sha256(p) for p in outputs},
    }
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    return atomic_write(stage_dir / "manifest.json", lambda fh: fh.write(text))


def _require(path: Path, stage) -> Path:
    if not path.exists():
        raise MissingCheckpointError(path, stage)
    return path


# ---------------------------------------------------------------------------
# stages


def _load_ingest(root: Path):
    upd = _require(root / "ingest" / "updates.txt", "ingest-check")
    updates = ingest.read_updates(upd)
    snapshots = {}
    rib_dir = root / "ingest" / "ribs"
    for p in sorted(rib_dir.glob("*.rib")) if rib_dir.exists() else ():
        rib = ingest.read_rib(p)
        snapshots[rib.vp_id] = rib
    inputs = [upd, *sorted(rib_dir.glob("*.rib"))] if rib_dir.exists() else [upd]
    return updates, snapshots, inputs


def _vp_ids(updates, snapshots) -> list:
    return sorted(set(snapshots) | {u.vp_id for u in updates})


def _read_categories(path: Path) -> dict:
    with open(path) as fh:
        next(fh)
        return {int(a): events.AsCategory(int(c)) for a, c in (line.strip().split(",") for line in fh
                                                               if line.strip())}


def stage_ingest_check(cfg: PipelineConfig, args, root: Path) -> int:
    if not cfg.updates:
        raise ConfigError("archive.updates", "at least one update file is required")
    streams = []
    for p in cfg.updates:
        stream = ingest.read_updates(p)
        try:
            ingest.check_sorted(stream)
        except ingest.StreamOrderError as exc:
            raise ConfigError("archive.updates", f"{p}: {exc}") from None
        streams.append(stream)
    updates = ingest.merge_streams(streams)
    ribs = [ingest.read_rib(p) for p in cfg.ribs]
    seen = set()
    for r in ribs:
        if r.vp_id in seen:
            raise ConfigError("archive.ribs", f"two RIB snapshots for VP {r.vp_id}")
        seen.add(r.vp_id)

    d = root / "ingest"
    outs = [atomic_write(d / "updates.txt", lambda fh: ingest.write_updates(updates, fh))]
    for r in sorted(ribs, key=lambda r: r.vp_id):
        outs.append(atomic_write(d / "ribs" / f"{r.vp_id}.rib",
                                 lambda fh, r=r: fh.write(ingest.format_rib(r) + "\n")))
    by_vp = ingest.split_by_vp(updates)
    rib_by_vp = {r.vp_id: r for r in ribs}

    def summary(fh):
        fh.write("vp_id,updates,first,last,rib_routes\n")
        for vp in sorted(set(by_vp) | set(rib_by_vp)):
            s = by_vp.get(vp, [])
            first = s[0].timestamp if s else ""
            last = s[-1].timestamp if s else ""
            n_rib = len(rib_by_vp[vp]) if vp in rib_by_vp else 0
            fh.write(f"{vp},{len(s)},{first},{last},{n_rib}\n")

    outs.append(atomic_write(d / "summary.csv", summary))
    write_manifest(d, "ingest-check", cfg.seed, {}, [*cfg.updates, *cfg.ribs], outs, root)
    logger.info("ingested %d updates from %d VPs", len(updates), len(set(by_vp) | seen))
    return 0


def stage_detect_events(cfg, args, root: Path) -> int:
    if cfg.relationships is None:
        raise ConfigError("categories.relationships", "an AS relationship file is required")
    updates, snapshots, inputs = _load_ingest(root)
    with open(cfg.relationships) as fh:
        rels = minimet.read_relationships(fh)
    cands = events.detect_candidates(updates, cfg.window, None, snapshots)
    extra = {a for c in cands for a in c.link}
    for r in snapshots.values():
        for route in r.routes.values():
            extra.update(route.as_path)
    classification = events.classify_all(rels, cfg.tier1, cfg.hypergiants, extra)
    d = root / "events"
    outs = [
        atomic_write(d / "candidates.txt", lambda fh: events.write_candidates(cands, fh)),
        atomic_write(d / "categories.csv", lambda fh: fh.write(
            "asn,category\n" + "".join(f"{a},{int(c)}\n" for a, c in sorted(classification.items())))),
    ]
    write_manifest(d, "detect-events", cfg.seed, {"window": cfg.window},
                   [*inputs, cfg.relationships], outs, root)
    logger.info("%d candidate events", len(cands))
    return 0


def stage_sample_events(cfg, args, root: Path) -> int:
    d = root / "events"
    cpath = _require(d / "candidates.txt", "detect-events")
    kpath = _require(d / "categories.csv", "detect-events")
    with open(cpath) as fh:
        cands = events.read_candidates(fh)
    classification = _read_categories(kpath)
    if cfg.end <= cfg.start:
        raise ConfigError("timeframe.end", "a timeframe is required for sampling")
    seed = substream(cfg.seed, "sample-events")
    es = events.balanced_sample(cands, classification, cfg.periods, cfg.per_period,
                                (cfg.start, cfg.end), seed, cfg.window, cfg.max_attempts,
                                cfg.sampling)
    out = atomic_write(d / "event_set.txt", lambda fh: events.write_event_set(es, fh))
    write_manifest(d, "sample-events", cfg.seed,
                   {"periods": cfg.periods, "per_period": cfg.per_period,
                    "sampling": cfg.sampling, "start": cfg.start, "end": cfg.end},
                   [cpath, kpath], [out], root)
    logger.info("sampled %d events, fill rate %.3f", len(es.events), es.fill_rate())
    return 0


def stage_features(cfg, args, root: Path) -> int:
    updates, snapshots, inputs = _load_ingest(root)
    epath = _require(root / "events" / "event_set.txt", "sample-events")
    with open(epath) as fh:
        es = events.read_event_set(fh)
    vp_ids = _vp_ids(updates, snapshots)
    jobs = args.jobs or cfg.jobs
    X = features.feature_tensor(ingest.split_by_vp(updates), snapshots, es, vp_ids, jobs)
    d = root / "features"
    out = atomic_write(d / "features.csv",
                       lambda fh: features.write_feature_checkpoint(X, vp_ids, fh))
    write_manifest(d, "features", cfg.seed, {}, [*inputs, epath], [out], root)
    return 0


def stage_score(cfg, args, root: Path) -> int:
    updates, snapshots, inputs = _load_ingest(root)
    epath = _require(root / "events" / "event_set.txt", "sample-events")
    fpath = _require(root / "features" / "features.csv", "features")
    with open(epath) as fh:
        es = events.read_event_set(fh)
    with open(fpath) as fh:
        X, vp_ids = features.read_feature_checkpoint(fh, es.P, es.per_period)
    if vp_ids != _vp_ids(updates, snapshots):
        raise MissingCheckpointError(f"{fpath} (stale: VP set differs from ingest)", "features")
    scorer = redundancy.RedundancyScorer().fit(X, vp_ids=vp_ids)
    if cfg.end - cfg.start < selection.HOUR:
        raise ConfigError("timeframe.end", "volume estimation needs a timeframe of at least one hour")
    windows = selection.sample_hour_windows(cfg.start, cfg.end, substream(cfg.seed, "volume"))
    vols = selection.volume_profile(ingest.split_by_vp(updates), vp_ids, windows)
    tag = args.tag or cfg.tag
    d = root / "scores" / tag
    outs = [atomic_write(d / "scores.csv", scorer.score_matrix().write_csv),
            atomic_write(d / "volumes.csv", vols.write_csv)]
    write_manifest(d, "score", cfg.seed, {"tag": tag}, [*inputs, epath, fpath], outs, root)
    return 0


def _load_store(root: Path) -> dict:
    base = root / "scores"
    store = {}
    for d in sorted(base.iterdir()) if base.exists() else ():
        s, v = d / "scores.csv", d / "volumes.csv"
        if s.exists() and v.exists():
            with open(s) as fs, open(v) as fv:
                store[d.name] = (redundancy.RedundancyMatrix.read_csv(fs),
                                 selection.VolumeProfile.read_csv(fv), s)
    return store


def stage_select(cfg, args, root: Path) -> int:
    store = _load_store(root)
    if not store:
        raise MissingCheckpointError(root / "scores", "score")
    tag = str(args.year) if args.year is not None else cfg.tag
    budget = args.budget if args.budget is not None else cfg.budget
    alpha = args.alpha if args.alpha is not None else cfg.alpha
    if budget is not None and not budget > 0:
        raise ConfigError("selection.budget", "must be > 0")
    if not 0 < alpha <= 1:
        raise ConfigError("selection.alpha", "must be in (0, 1]")
    try:
        result, report = selection.emit_selection(store, tag, budget, alpha)
    except selection.UnknownTagError as exc:
        raise MissingCheckpointError(f"{root / 'scores' / tag} ({exc.args[0]})", "score") from None
    except selection.EmptySelectionError as exc:
        raise ConfigError("selection.budget", str(exc)) from None
    d = root / "selection" / tag
    src = store[tag][2]
    report["scores_csv"] = "scores.csv"
    report["budget"] = None if budget is None else float(budget)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    outs = [atomic_write(d / "selection.csv", result.write_csv),
            atomic_write(d / "scores.csv", lambda fh: fh.write(Path(src).read_text())),
            atomic_write(d / "report.json", lambda fh: fh.write(text))]
    write_manifest(d, "select", cfg.seed, {"tag": tag, "alpha": alpha, "budget": report["budget"]},
                   [src, src.parent / "volumes.csv"], outs, root)
    for rank, vp in enumerate(result.vp_ids, 1):
        print(f"{rank}\t{vp}\t{result.cumulative_volume[rank - 1]:g}")
    return 0


def stage_benchmark(cfg, args, root: Path) -> int:
    updates, snapshots, inputs = _load_ingest(root)
    store = _load_store(root)
    tag = args.tag or cfg.tag
    if tag not in store:
        raise MissingCheckpointError(root / "scores" / tag, "score")
    kpath = _require(root / "events" / "categories.csv", "detect-events")
    R, vols, spath = store[tag]
    archive = evaldefs.Archive(snapshots, updates)
    vps = list(R.vp_ids)
    reference = selection.greedy_select(R, vols, cfg.alpha, None).vp_ids
    cats = _read_categories(kpath)
    vp_cat = {}
    for vp in vps:
        home = evaldefs.vp_home_as(archive, vp)
        vp_cat[vp] = cats.get(home, events.AsCategory.STUB) if home is not None \
            else events.AsCategory.STUB
    seed = substream(cfg.seed, "benchmark")
    baselines = {
        "random": evaldefs.naive_baselines("random", vps, seed=seed),
        "as_distance": evaldefs.naive_baselines(
            "as_distance", vps, seed=seed, distances=evaldefs.vp_hop_distances(archive, sorted(vps))),
        "unbiased": evaldefs.naive_baselines("unbiased", vps, categories=vp_cat),
    }
    streams = evaldefs.observe_archive(archive, vps)
    for level in evaldefs.LEVELS:
        baselines[f"greedy_def{level}"] = evaldefs.greedy_specific_def(level, streams)
    data = evaldefs.UseCaseData(archive, vps)
    for uc in evaldefs.USE_CASES:
        baselines[f"greedy_{uc}"] = evaldefs.greedy_specific_usecase(
            evaldefs.ObjectiveSpec(uc, 1.0), vps, data)
    rows = evaldefs.benchmark(data, reference, baselines)
    d = root / "benchmark"
    out = atomic_write(d / "benchmark.csv", lambda fh: evaldefs.write_benchmark_csv(rows, fh))
    write_manifest(d, "benchmark", cfg.seed, {"tag": tag}, [*inputs, spath, kpath], [out], root)
    return 0


def parse_k_sweep(text: str, n: int) -> list:
    """``a:b`` (inclusive), ``a:b:step`` or a comma list."""
    try:
        if ":" in text:
            parts = [int(x) for x in text.split(":")]
            if len(parts) not in (2, 3):
                raise ValueError
            step = parts[2] if len(parts) == 3 else 1
            ks = list(range(parts[0], parts[1] + 1, step))
        else:
            ks = [int(x) for x in _split(text)]
    except ValueError:
        raise ConfigError("simulate.k_sweep", f"cannot parse {text!r}") from None
    if not ks or min(ks) < 0 or max(ks) > n:
        raise ConfigError("simulate.k_sweep", f"values must lie in [0, {n}]")
    return ks


def stage_simulate(cfg, args, root: Path) -> int:
    n = args.n
    if n < 10:
        raise ConfigError("simulate.n", "must be >= 10")
    ks = parse_k_sweep(args.k_sweep or f"1:{n}", n)
    strategies = []
    for s in _split(args.strategies):
        if s not in STRATEGY_ALIASES:
            raise ConfigError("simulate.strategies", f"unknown strategy {s!r}")
        strategies.append(STRATEGY_ALIASES[s])
    d = root / "simulate"
    rows = []
    for i in range(args.seeds):
        tseed = substream(cfg.seed, "simulate.topology", i)
        try:
            topo = minimet.generate_topology(n, args.avg_degree, args.exponent, tseed)
        except (minimet.TopologyError, ValueError) as exc:
            raise ConfigError("simulate", str(exc)) from None
        seen, _ = minimet.link_matrix(topo)
        dist = minimet.hop_distances(topo) if "distance_based" in strategies else None
        for s in strategies:
            for cov in minimet.coverage_curve(topo, seen, s, substream(cfg.seed, s, i), ks, dist):
                rows.append((s, i, cov))
    outs = [atomic_write(d / "coverage.csv", lambda fh: minimet.write_coverage_csv(rows, fh))]
    if args.emit_archive:
        outs += _emit_archive(cfg, args, d / "archive")
    params = {k: getattr(args, k) for k in ("n", "avg_degree", "exponent", "seeds", "k_sweep",
                                            "strategies", "emit_archive", "archive_vps",
                                            "archive_clones", "archive_events", "archive_duration")}
    write_manifest(d, "simulate", cfg.seed, params, [], outs, root)
    return 0


def _emit_archive(cfg, args, d: Path) -> list:
    """Synthetic archive plus a ready-to-run config pointing at it."""
    rng = np.random.default_rng(substream(cfg.seed, "simulate.archive"))
    topo = minimet.generate_topology(args.n, args.avg_degree, args.exponent,
                                     substream(cfg.seed, "simulate.archive.topology"))
    n_vps = args.archive_vps
    if not 2 <= n_vps <= topo.n:
        raise ConfigError("simulate.archive_vps", f"must be in [2, {topo.n}]")
    hosts = sorted(rng.choice(topo.n, size=n_vps, replace=False).tolist())
    vp_asns = {f"vp{i:03d}": a for i, a in enumerate(hosts)}
    for c in range(args.archive_clones):
        vp_asns[f"vp{n_vps + c:03d}"] = hosts[c % len(hosts)]
    arch = minimet.simulate_archive(topo, vp_asns, 0, args.archive_duration, args.archive_events,
                                    substream(cfg.seed, "simulate.archive.events"))
    outs = [atomic_write(d / "updates.txt", lambda fh: ingest.write_updates(arch.updates, fh)),
            atomic_write(d / "relationships.txt", topo.write_edges)]
    for vp, rib in sorted(arch.snapshots.items()):
        outs.append(atomic_write(d / "ribs" / f"{vp}.rib",
                                 lambda fh, r=rib: fh.write(ingest.format_rib(r) + "\n")))
    periods = max(1, min(20, args.archive_duration // events.WINDOW))
    ini = (
        "[pipeline]\nseed = {seed}\noutput = out\n\n"
        "[archive]\nupdates = updates.txt\nribs = ribs/*.rib\n\n"
        "[categories]\nrelationships = relationships.txt\ntier1 = {t1}\nhypergiants = {hg}\n\n"
        "[timeframe]\nstart = 0\nend = {end}\n\n"
        "[events]\nperiods = {p}\nsampling = balanced\n\n"
        "[selection]\nalpha = 0.25\ntag = sim\n"
    ).format(seed=cfg.seed, t1=", ".join(map(str, topo.tier1)),
             hg=", ".join(map(str, minimet.default_hypergiants(topo))),
             end=args.archive_duration, p=periods)
    outs.append(atomic_write(d / "pipeline.ini", lambda fh: fh.write(ini)))
    return outs


HANDLERS = {
    "ingest-check": stage_ingest_check,
    "detect-events": stage_detect_events,
    "sample-events": stage_sample_events,
    "features": stage_features,
    "score": stage_score,
    "select": stage_select,
    "benchmark": stage_benchmark,
    "simulate": stage_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--output", help=f"output root (else ${OUTPUT_ENV}, config, ./{DEFAULT_OUTPUT})")
    common.add_argument("--jobs", type=int, default=None, help="worker processes")
    common.add_argument("--seed", type=int, default=None, help="override pipeline.seed")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="vpscore", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="stage", required=True)
    for name in ("ingest-check", "detect-events", "sample-events", "features"):
        sub.add_parser(name, parents=[common])
    sp = sub.add_parser("score", parents=[common])
    sp.add_argument("--tag", help="score set tag (default selection.tag)")
    sp = sub.add_parser("select", parents=[common])
    sp.add_argument("--year", help="score set tag, e.g. a year")
    sp.add_argument("--budget", type=float, help="volume budget (updates per hour)")
    sp.add_argument("--alpha", type=float)
    sp = sub.add_parser("benchmark", parents=[common])
    sp.add_argument("--tag")
    sp = sub.add_parser("simulate", parents=[common])
    sp.add_argument("--n", type=int, default=600)
    sp.add_argument("--avg-degree", type=float, default=6.1)
    sp.add_argument("--exponent", type=float, default=2.1)
    sp.add_argument("--k-sweep", default=None, help="a:b, a:b:step or a,b,c (default 1:n)")
    sp.add_argument("--strategies", default="random,distance,greedy")
    sp.add_argument("--seeds", type=int, default=20)
    sp.add_argument("--emit-archive", action="store_true",
                    help="also write a synthetic update archive and matching config")
    sp.add_argument("--archive-vps", type=int, default=10)
    sp.add_argument("--archive-clones", type=int, default=0,
                    help="extra VPs sharing an AS with an existing one")
    sp.add_argument("--archive-events", type=int, default=300)
    sp.add_argument("--archive-duration", type=int, default=86400)
    return p


def _output_root(args, cfg) -> Path:
    return Path(args.output or os.environ.get(OUTPUT_ENV) or cfg.output or DEFAULT_OUTPUT)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = load_config(args.config)
        elif args.stage == "simulate":
            cfg = PipelineConfig()
        else:
            raise ConfigError("config", "--config is required for this stage")
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("pipeline.seed", "must be >= 0")
            cfg.seed = args.seed
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError("pipeline.jobs", "must be >= 1")
        root = _output_root(args, cfg)
        return HANDLERS[args.stage](cfg, args, root)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except MissingCheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ingest.ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
