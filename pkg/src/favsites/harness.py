"""Experiment harness: validated configs, seeded replicates, files, manifests, reports.

A run writes its data files (CSV/JSON), ``summary.json``/``summary.txt`` and
``manifest.json`` into one output directory. Data files and the summary depend
only on the config and the package version; the manifest adds wall-clock times.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, exponents, gff, graphs, hitting, points
from .lattice import BoundaryPattern, simulate_torus_walk, simulate_walk
from .rng import replicate_seed

SCHEMA_VERSION = 1

EXPERIMENTS = ("favorite", "boundary-favorite", "theta", "tilde-theta", "late", "cover", "gff", "high",
               "ray-knight", "clt", "exponents", "constants", "kesten")

# units: n_grid holds walk steps for the Z^d walk experiments, sides for late/cover/
# gff/high/exponents(late, high), exit radii for exponents(psi), tail times for kesten
DEFAULTS = {
    "favorite": {"dimension": 3, "n_grid": [10_000, 100_000], "replicates": 10},
    "boundary-favorite": {"dimension": 3, "n_grid": [10_000, 100_000], "replicates": 10,
                          "pattern": [[1, 0, 0]]},
    "theta": {"dimension": 3, "n_grid": [10_000, 100_000, 1_000_000], "replicates": 10,
              "pattern": [[1, 0, 0]], "delta": 0.5},
    "tilde-theta": {"dimension": 3, "n_grid": [10_000, 100_000, 1_000_000], "replicates": 10,
                    "pattern": [[1, 0, 0]], "beta_fraction": 0.5},
    "late": {"n_grid": [32, 64, 128], "replicates": 10, "alpha": 0.25},
    "cover": {"n_grid": [32, 64, 128], "replicates": 20},
    "gff": {"n_grid": [3, 16], "replicates": 10_000},
    "high": {"n_grid": [64, 128, 256, 512], "replicates": 50, "alpha": 0.25},
    "ray-knight": {"graph": "cycle(4)", "t": 2.0, "replicates": 10_000},
    "clt": {"graph": "cycle(4)", "t_list": [1.0, 10.0, 100.0], "replicates": 10_000},
    "exponents": {"source": "high", "alpha": 0.25, "beta": 0.5, "n_grid": [64, 128, 256, 512],
                  "replicates": 10},
    "constants": {"dimension": 3, "pattern": [[1, 0, 0]], "radii": [16, 32, 64], "walk_length": 10_000,
                  "replicates": 10_000},
    "kesten": {"pattern": [[0, 0], [1, 0]], "n_grid": [1_000, 10_000], "replicates": 10_000},
}

# Watson's value of the simple-walk Green function at the origin in Z^3
WATSON_GREEN_3D = 1.516386059151978
REPLICATED = {"favorite", "boundary-favorite", "theta", "tilde-theta", "late", "cover"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    master_seed: int = 0
    replicates: int = 100
    n_grid: list = field(default_factory=list)
    dimension: int = 3
    pattern: list | None = None
    alpha: float | None = None
    beta: float | None = None
    beta_fraction: float | None = None
    delta: float | None = None
    t: float | None = None
    t_list: list | None = None
    graph: str | None = None
    source: str | None = None
    metric: str | None = None
    radii: list | None = None
    walk_length: int | None = None
    permutations: int = gff.DEFAULT_PERMUTATIONS
    output: str = "out"
    threads: int = 1
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "experiment" not in data:
            raise ConfigError("config must name an experiment")
        if data.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(f"config schema version {data['schema_version']} != {SCHEMA_VERSION}")
        merged = {**DEFAULTS.get(data["experiment"], {}), **data}
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def hash(self) -> str:
        """Digest of everything that determines the data files."""
        core = {k: v for k, v in self.to_dict().items() if k not in ("output", "threads")}
        return hashlib.sha256(json.dumps(core, sort_keys=True).encode()).hexdigest()[:16]

    def validate(self) -> None:
        e = self.experiment
        if e not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {e!r}; choose from {', '.join(EXPERIMENTS)}")
        if not isinstance(self.replicates, int) or self.replicates <= 0:
            raise ConfigError("replicates must be a positive integer")
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if e in ("favorite", "boundary-favorite", "theta", "tilde-theta", "constants"):
            if not 1 <= self.dimension <= 3:
                raise ConfigError("dimension must be 1, 2 or 3")
        needs_grid = e not in ("ray-knight", "clt", "constants")
        if needs_grid:
            if not self.n_grid or any(int(n) != n or n < 0 for n in self.n_grid):
                raise ConfigError("n_grid must be a nonempty list of non-negative integers")
            self.n_grid = sorted(int(n) for n in self.n_grid)
        if e in ("late", "cover") and min(self.n_grid) < 4:
            raise ConfigError("torus sides must be at least 4")
        if e in ("gff", "high") and min(self.n_grid) < 3:
            raise ConfigError("box sides must be at least 3")
        if e in ("boundary-favorite", "theta", "tilde-theta", "constants"):
            H = self._pattern()
            if H.dimension != self.dimension:
                raise ConfigError("pattern dimension does not match dimension")
        if e == "theta" and not (self.delta is not None and 0 < self.delta < 1):
            raise ConfigError(f"delta = {self.delta} violates 0 < delta < 1")
        if e == "tilde-theta" and not (self.beta_fraction is not None and self.beta_fraction > 0):
            raise ConfigError("beta_fraction must be positive")
        if e in ("theta", "tilde-theta", "constants") and self.dimension < 3:
            raise ConfigError("beta_d(H) is available for dimension 3 only")
        if e in ("late", "high", "exponents") and not (self.alpha is not None and 0 < self.alpha < 1):
            raise ConfigError(f"alpha = {self.alpha} violates 0 < alpha < 1")
        if e == "exponents":
            if not (self.beta is not None and 0 < self.beta < 1):
                raise ConfigError(f"beta = {self.beta} violates 0 < beta < 1")
            if self.source not in ("psi", "late", "high"):
                raise ConfigError("source must be psi, late or high")
            if len(self.n_grid) < 3:
                raise ConfigError("exponent fits need at least three n values")
        if e in ("ray-knight", "clt"):
            try:
                g = graphs.parse_graph(self.graph or "")
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            if len(g) > 200:
                raise ConfigError("graph must have at most 200 sites")
        if e == "ray-knight" and not (self.t is not None and self.t > 0):
            raise ConfigError("t must be positive")
        if e == "clt":
            ts = self.t_list or []
            if not ts or any(t <= 0 for t in ts) or list(ts) != sorted(ts):
                raise ConfigError("t_list must be positive and increasing")
        if e == "constants" and (not self.radii or len(self.radii) != 3):
            raise ConfigError("radii must list three truncation radii")
        if e == "kesten":
            if not self.pattern or any(len(s) != 2 for s in self.pattern):
                raise ConfigError("kesten needs a nonempty planar site list in pattern")

    def _pattern(self) -> BoundaryPattern:
        if not self.pattern:
            raise ConfigError("pattern H is required")
        H = BoundaryPattern.certify(self.pattern)
        if H.validity.value != "valid":
            raise ConfigError(f"pattern {self.pattern} is not in the admissible class: {H.reason}")
        return H


@dataclass
class RunManifest:
    config_hash: str
    version: str
    experiment: str
    seeds: dict
    outputs: list
    stage_seconds: dict
    failures: list
    within_band: bool | None
    summary: dict
    created: float
    out_dir: str = ""

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=1, sort_keys=True, default=_json_default)

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        return cls(**json.loads(path.read_text()))


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------- replicate workers

def _replicate(cfg: dict, extras: dict, r: int) -> list:
    e = cfg["experiment"]
    seed = replicate_seed(cfg["master_seed"], e, r)
    grid = cfg["n_grid"]
    rows = []
    if e in ("late", "cover"):
        for n in grid:
            rec = simulate_torus_walk(n, replicate_seed(seed, n))
            if e == "cover":
                rows.append((n, seed, rec.cover_time, rec.cover_time / (n * math.log(n)) ** 2))
            else:
                rows.append((n, seed, cfg["alpha"], points.late_points(rec, cfg["alpha"])[0].count))
        return rows
    path, _ = simulate_walk(cfg["dimension"], grid[-1], seed)
    H = cfg["pattern"]
    for n in grid:
        fld = path.local_times(n)
        if e == "favorite":
            rows.append((n, seed) + points.favorite(fld).row()[2:])
        elif e == "boundary-favorite":
            rows.append((n, seed) + points.boundary_favorite(fld, H).row()[2:])
        elif e == "theta":
            rows.append((n, seed, cfg["delta"], points.theta_count(fld, H, cfg["delta"], extras["beta"]).count))
        elif e == "tilde-theta":
            beta = cfg["beta_fraction"] * extras["beta"]
            rows.append((n, seed, beta, points.tilde_theta(path, beta, H, n).count))
    return rows


def _run_replicate_safe(cfg, extras, r):
    try:
        return r, _replicate(cfg, extras, r), None
    except Exception as exc:  # recorded per replicate, the batch continues
        return r, [], f"{type(exc).__name__}: {exc}"


# ---------------------------------------------------------------- experiment bodies

def _fit_or_none(pairs):
    try:
        return exponents.fit_exponent(pairs)
    except ValueError:
        return None


def _median_by_n(rows, col):
    by = {}
    for row in rows:
        by.setdefault(row[0], []).append(row[col])
    return {n: float(np.median(v)) for n, v in sorted(by.items())}


def _mean_by_n(rows, col):
    by = {}
    for row in rows:
        by.setdefault(row[0], []).append(row[col])
    return {n: float(np.mean(v)) for n, v in sorted(by.items())}


def _trend(pairs, label):
    return [{"n": n, "statistic": label, "value": v} for n, v in pairs.items()]


def _summarise_replicated(cfg: ExperimentConfig, rows, extras) -> tuple[dict, str, str, list]:
    e = cfg.experiment
    if e in ("favorite", "boundary-favorite"):
        med = _median_by_n(rows, 4)
        summary = {"statistic": "median normalized maximum", "trend": _trend(med, "median_normalized")}
        target = extras.get("beta")
        band = (0.5, 1.4) if e == "favorite" else (0.6, 1.4)
        if target is not None and med:
            last = med[max(med)]
            summary.update(target=target, band=[band[0] * target, band[1] * target],
                           within_band=bool(band[0] * target <= last <= band[1] * target))
        return summary, "favorites.csv", _csv(points.FAVORITE_COLUMNS, rows), []
    if e in ("theta", "tilde-theta", "late"):
        mean = _mean_by_n(rows, 3)
        fit = _fit_or_none(mean.items()) if len(mean) >= 3 else None
        summary = {"statistic": "log-log slope of mean count", "trend": _trend(mean, "mean_count"),
                   "slope": fit.slope if fit else None, "slope_se": fit.std_error if fit else None}
        if e == "theta":
            target = 1 - cfg.delta
            summary.update(target=target, band=[target - 0.15, target + 0.15])
            if fit:
                summary["within_band"] = bool(abs(fit.slope - target) <= 0.15)
        elif e == "tilde-theta":
            bound = 1 - cfg.beta_fraction
            summary.update(target=bound, band=[None, bound + 0.15])
            if fit:
                summary["within_band"] = bool(fit.slope <= bound + 0.15)
        return summary, "thresholds.csv", _csv(points.THRESHOLD_COLUMNS, rows), []
    # cover
    med = _median_by_n(rows, 3)
    dist = [abs(v - points.LATE_CONSTANT) for v in med.values()]
    summary = {"statistic": "median max_x T_x / (n log n)^2", "trend": _trend(med, "median_normalized_max"),
               "target": points.LATE_CONSTANT, "distance": dist,
               "within_band": all(b <= a for a, b in zip(dist, dist[1:]))}
    return summary, "cover.csv", _csv(points.COVER_COLUMNS, rows), []


def _covariance_with_se(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean of x_i x_j over rows and its standard error, without forming the products."""
    k = len(samples)
    cov = samples.T @ samples / k
    sq = samples * samples
    second = sq.T @ sq / k
    se = np.sqrt(np.maximum(second - cov * cov, 0.0) * k / (k - 1) / k)
    return cov, se


def _run_single(cfg: ExperimentConfig) -> tuple[dict, dict]:
    """Experiments without a per-replicate worker. Returns (summary, files)."""
    e, seed = cfg.experiment, cfg.master_seed
    if e == "gff":
        out = []
        ok = True
        for n in cfg.n_grid:
            s = gff.sample_gff_batch(n, cfg.replicates, replicate_seed(seed, "gff", n))[:, 1:-1, 1:-1]
            s = s.reshape(cfg.replicates, -1)
            G = gff.box_green(n).submatrix()
            cov, se = _covariance_with_se(s)
            z = float(np.max(np.abs(cov - G) / se))
            mean_z = float(np.max(np.abs(s.mean(0)) / (s.std(0, ddof=1) / math.sqrt(cfg.replicates))))
            out.append({"n": n, "max_cov_z": z, "max_mean_z": mean_z, "sites": int(s.shape[1])})
            ok &= z < 5
        summary = {"statistic": "max |sample cov - Green| in standard errors",
                   "trend": [{"n": r["n"], "statistic": "max_cov_z", "value": r["max_cov_z"]} for r in out],
                   "target": 0.0, "band": [0, 5], "within_band": bool(ok)}
        return summary, {"gff.json": _dumps(out)}
    if e == "high":
        res = gff.max_trend(cfg.n_grid, cfg.replicates, seed)
        rows = []
        for n in cfg.n_grid:
            for i, v in enumerate(res["samples"][n]):
                rows.append((n, i, float(v)))
        counts = []
        for n in cfg.n_grid:
            fld = gff.sample_gff(n, replicate_seed(seed, "high-points", n))
            counts.append((n, len(gff.high_points(fld, cfg.alpha))))
        last = res["medians"][-1]
        within = (0.7 * gff.MAX_CONSTANT <= last <= 1.1 * gff.MAX_CONSTANT) and res["nonincreasing"]
        summary = {"statistic": "median max phi / log n",
                   "trend": [{"n": n, "statistic": "median_max_normalized", "value": m}
                             for n, m in zip(res["sides"], res["medians"])],
                   "target": gff.MAX_CONSTANT, "distance": res["distance"],
                   "band": [0.7 * gff.MAX_CONSTANT, 1.1 * gff.MAX_CONSTANT], "within_band": bool(within),
                   "high_point_counts": counts}
        return summary, {"high.csv": _csv(("n", "sample", "max_normalized"), rows)}
    if e == "ray-knight":
        g = graphs.parse_graph(cfg.graph)
        rep = gff.ray_knight_check(g, cfg.t, cfg.replicates, seed, cfg.permutations)
        summary = {"statistic": "per-site Ray-Knight discrepancies",
                   "trend": [{"n": cfg.replicates, "statistic": f"mean_z[{r['site']}]", "value": r["mean_z"]}
                             for r in rep["sites"]],
                   "within_band": rep["within_band"], "origin_exact": rep["origin_exact"]}
        return summary, {"ray_knight.json": gff.report_json(rep) + "\n", "ray_knight_full.json": _dumps(rep)}
    if e == "clt":
        g = graphs.parse_graph(cfg.graph)
        rep = gff.clt_rescaling(g, cfg.t_list, cfg.replicates, seed)
        per = rep["per_t"]
        means_ok = all(abs(z) < 4 for p in per for z in p["mean_z"])
        var_ok = max(per[-1]["relative_gap"]) <= 0.10
        trend_ok = per[-1]["variance_gap"] <= per[0]["variance_gap"]
        skew = [float(np.median(np.abs(p["skewness"]))) for p in per]
        summary = {"statistic": "moments of (K - t)/sqrt(2t)",
                   "trend": [{"n": p["t"], "statistic": "median |var - g|", "value": p["variance_gap"]}
                             for p in per],
                   "target": "g(x,x)", "median_abs_skewness": skew, "means_ok": means_ok, "variance_ok": var_ok, "trend_ok": trend_ok,
                   "within_band": bool(means_ok and var_ok and trend_ok)}
        return summary, {"clt.json": _dumps(rep)}
    if e == "exponents":
        rep = exponents.exponent_experiment(cfg.source, cfg.alpha, cfg.beta, cfg.n_grid, cfg.replicates, seed,
                                            cfg.metric)
        rows = rep.pop("rows")
        slope = rep["q2_hat"]["slope"]
        summary = {"statistic": "fitted Q2-hat", "caveat": rep["caveat"],
                   "trend": [{"n": n, "statistic": "mean_count", "value": c}
                             for n, c in zip(rep["n_grid"], rep["mean_counts"])],
                   "target": rep["rho2_hat"], "rho2": rep["rho2"], "slope": slope, "q2": rep["q2"]["slope"]}
        if cfg.source in ("high", "late"):
            summary["band"] = [rep["rho2_hat"] - 0.6, rep["rho2_hat"] + 0.6]
            summary["within_band"] = slope is not None and abs(slope - rep["rho2_hat"]) <= 0.6
        return summary, {"exponents.csv": _csv(exponents.EXPERIMENT_COLUMNS, rows),
                         "exponents.json": _dumps(rep)}
    if e == "constants":
        H = cfg._pattern()
        radii = tuple(cfg.radii)
        ret = hitting.return_probability(cfg.dimension, radii)
        records = [ret.to_record("return_probability", {"d": cfg.dimension, "radii": list(radii)}),
                   hitting.erdos_taylor_constant(cfg.dimension, radii).to_record(),
                   hitting.beta_constant(cfg.dimension, H, radii).to_record(),
                   hitting.q_exact(cfg.dimension, H, radii).to_record()]
        if cfg.walk_length:
            q = hitting.q_constant(cfg.dimension, H, cfg.walk_length, cfg.replicates, seed)
            records.append(q.to_record())
        reference = 1 - 1 / WATSON_GREEN_3D
        within = abs(ret.value - reference) <= 0.001 if cfg.dimension == 3 else None
        summary = {"statistic": "potential-theory constants",
                   "trend": [{"n": 0, "statistic": r["name"], "value": r["value"]} for r in records],
                   "target": reference if cfg.dimension == 3 else None, "within_band": within}
        return summary, {"constants.json": _dumps(records)}
    if e == "kesten":
        sites = [tuple(s) for s in cfg.pattern]
        tail = hitting.kesten_tail(sites, cfg.n_grid, cfg.replicates, seed)
        rows = [(t["n"], "kesten", t["value"], t["std_error"]) for t in tail]
        if len(sites) == 2:
            b = tuple(np.subtract(sites[1], sites[0]))
            pair = hitting.two_point_tail(b, cfg.n_grid, cfg.replicates, seed)
            rows += [(t["n"], "two-point", t["value"], t["std_error"]) for t in pair]
        dist = [abs(t["value"] - 1) for t in tail]
        summary = {"statistic": "normalised tail sums", "target": 1.0,
                   "trend": [{"n": r[0], "statistic": r[1], "value": r[2]} for r in rows], "distance": dist,
                   "within_band": all(b <= a for a, b in zip(dist, dist[1:]))}
        return summary, {"kesten.csv": _csv(("n", "variant", "value", "std_error"), rows)}
    raise ConfigError(f"experiment {e!r} has no runner")


def _extras(cfg: ExperimentConfig) -> dict:
    e = cfg.experiment
    if e == "favorite" and cfg.dimension == 3:
        return {"beta": hitting.erdos_taylor_constant(3).value}
    if e in ("boundary-favorite", "theta", "tilde-theta") and cfg.dimension == 3:
        return {"beta": hitting.beta_constant(3, cfg._pattern()).value}
    return {}


# ---------------------------------------------------------------- run / report

def _write(out: Path, name: str, text: str) -> Path:
    target = (out / name).resolve()
    if out.resolve() not in target.parents:
        raise ConfigError(f"refusing to write {name!r} outside {out}")
    target.write_text(text)
    return target


def run(config: ExperimentConfig, out_dir=None, threads: int | None = None,
        replicate: int | None = None) -> RunManifest:
    """Execute one experiment and write its files; returns the manifest."""
    config.validate()
    out = Path(out_dir or config.output)
    out.mkdir(parents=True, exist_ok=True)
    threads = threads or config.threads
    stages = {}
    t0 = time.perf_counter()
    extras = _extras(config)
    stages["constants"] = time.perf_counter() - t0
    failures, seeds = [], {}
    files = {}
    t0 = time.perf_counter()
    if config.experiment in REPLICATED:
        reps = [replicate] if replicate is not None else list(range(config.replicates))
        if replicate is not None and not 0 <= replicate < config.replicates:
            raise ConfigError(f"replicate {replicate} outside 0..{config.replicates - 1}")
        seeds = {str(r): replicate_seed(config.master_seed, config.experiment, r) for r in reps}
        cfg = config.to_dict()
        if threads > 1 and len(reps) > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(_run_replicate_safe, [cfg] * len(reps), [extras] * len(reps), reps))
        else:
            results = [_run_replicate_safe(cfg, extras, r) for r in reps]
        rows = []
        for r, rrows, err in sorted(results, key=lambda x: x[0]):
            if err:
                failures.append({"replicate": r, "seed": seeds[str(r)], "error": err})
            rows.extend(rrows)
        summary, name, text, _ = _summarise_replicated(config, rows, extras)
        files[name] = text
    else:
        if replicate is not None:
            raise ConfigError(f"experiment {config.experiment!r} has no per-replicate replay")
        seeds = {"master": config.master_seed}
        summary, files = _run_single(config)
    stages["simulate"] = time.perf_counter() - t0
    summary = {"experiment": config.experiment, "config_hash": config.hash(), "version": __version__,
               "failures": len(failures), **summary}
    files["summary.json"] = _dumps(summary)
    files["summary.txt"] = summary_text(summary)
    files["config.json"] = config.to_json() + "\n"
    written = [_write(out, name, text).name for name, text in sorted(files.items())]
    manifest = RunManifest(config.hash(), __version__, config.experiment, seeds, written, stages, failures,
                           summary.get("within_band"), summary, time.time(), str(out))
    _write(out, "manifest.json", manifest.to_json())
    return manifest


def summary_text(summary: dict) -> str:
    lines = [f"experiment: {summary['experiment']}  (config {summary['config_hash']}, v{summary['version']})",
             f"statistic:  {summary.get('statistic', '')}"]
    if "caveat" in summary:
        lines.append(f"caveat:     {summary['caveat']}")
    for row in summary.get("trend", []):
        lines.append(f"  n={row['n']!s:>10}  {row['statistic']:<28} {row['value']!r}")
    for key in ("slope", "target", "band", "within_band"):
        if key in summary:
            lines.append(f"{key}: {summary[key]!r}")
    return "\n".join(lines) + "\n"


def report(manifests) -> dict:
    """Merge manifests into one trend table per experiment, with target columns."""
    manifests = [m if isinstance(m, RunManifest) else RunManifest.load(m) for m in manifests]
    if not manifests:
        raise ValueError("report needs at least one manifest")
    warnings = []
    versions = {m.version for m in manifests}
    if len(versions) > 1:
        warnings.append(f"artifact versions differ: {sorted(versions)}")
    tables = {}
    for m in manifests:
        t = tables.setdefault(m.experiment, {"rows": {}, "target": m.summary.get("target"),
                                             "within_band": []})
        for row in m.summary.get("trend", []):
            t["rows"][(row["n"], row["statistic"])] = row["value"]
        t["within_band"].append(m.within_band)
    out = {}
    for exp, t in tables.items():
        rows = [{"n": n, "statistic": s, "value": v, "target": t["target"]}
                for (n, s), v in sorted(t["rows"].items(), key=lambda kv: (kv[0][0], kv[0][1]))]
        out[exp] = {"rows": rows, "target": t["target"], "within_band": t["within_band"]}
    return {"tables": out, "warnings": warnings}


def report_text(rep: dict) -> str:
    lines = [f"warning: {w}" for w in rep["warnings"]]
    for exp, t in rep["tables"].items():
        lines.append(f"[{exp}] target={t['target']!r}")
        lines.append(f"  {'n':>10}  {'statistic':<28} {'value':>20}")
        for r in t["rows"]:
            lines.append(f"  {r['n']!s:>10}  {r['statistic']:<28} {r['value']!r:>20}")
    return "\n".join(lines) + "\n"
