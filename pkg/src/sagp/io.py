"""CSV ingestion, run configuration and run-directory persistence.

A fitted run directory holds

* ``data.csv``    the training table exactly as read (original units),
* ``scheme.json`` the pruned partition with per-component counts,
* ``samples.csv`` one row per kept iteration,
* ``manifest.txt`` key=value lines with every setting needed to rerun.

Floats are written with 17 significant digits so that a reload is exact.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
from dataclasses import dataclass, fields, replace

import numpy as np

from .data import Table
from .errors import ConfigError, InvalidInputError
from .partition import load_scheme, save_scheme
from .sampler import PRESETS, McmcConfig, PosteriorSamples, Priors

FLOAT_FMT = "%.17g"


def fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FMT % float(v)


def load_csv(path, require_y=True):
    """Read a table with header ``x1..xd[,y]``; returns a Table (y may be None)."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InvalidInputError(f"cannot read {path}: {exc.strerror}") from exc
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise InvalidInputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    xcols = sorted(
        (i for i, h in enumerate(header) if h.startswith("x") and h[1:].isdigit()),
        key=lambda i: int(header[i][1:]),
    )
    if not xcols:
        raise InvalidInputError(f"{path}: missing column 'x1'")
    d = len(xcols)
    for k in range(1, d + 1):
        if f"x{k}" not in header:
            raise InvalidInputError(f"{path}: missing column 'x{k}'")
    ycol = header.index("y") if "y" in header else None
    if require_y and ycol is None:
        raise InvalidInputError(f"{path}: missing column 'y'")
    body = rows[1:]
    if not body:
        raise InvalidInputError(f"{path}: no data rows")
    wanted = xcols + ([ycol] if ycol is not None else [])
    values = np.empty((len(body), len(wanted)))
    for r, row in enumerate(body):
        if len(row) != len(header):
            raise InvalidInputError(f"{path}: row {r + 2} has {len(row)} fields, expected {len(header)}")
        for c, col in enumerate(wanted):
            cell = row[col].strip()
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise InvalidInputError(
                    f"{path}: non-numeric or non-finite cell {cell!r} at row {r + 2}, column {header[col]}"
                )
            values[r, c] = v
    X = values[:, :d]
    y = values[:, d] if ycol is not None else None
    return Table(X, y)


def write_table(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def save_csv(path, table):
    d = table.X.shape[1]
    header = [f"x{k + 1}" for k in range(d)] + (["y"] if table.y is not None else [])
    cols = [table.X] + ([table.y[:, None]] if table.y is not None else [])
    write_table(path, header, np.hstack(cols).tolist())


def _parse_bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt(conv):
    def parse(s):
        if s is None or str(s).strip().lower() in ("", "none", "auto"):
            return None
        return conv(s)

    return parse


def _branching(s):
    if isinstance(s, (int, tuple)):
        return s
    parts = [int(p) for p in str(s).replace("x", ",").split(",") if p.strip()]
    return parts[0] if len(parts) == 1 else tuple(parts)


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a fit; built from defaults, a config file and flags."""

    m: int = 10
    L: int = 3
    branching: object = 2
    preset: str = "amplitude_decay"
    alpha_eps: float = 1.0
    beta_eps: float = 1.0
    alpha_eta: float = 2.0
    n_iter: int = 3000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    init_bandwidth: float | None = None
    adapt_every: int | None = None
    resample_every: int = 1
    reanchor: bool = True
    eta_target: str = "conditional"
    alpha: float = 0.05

    def problems(self):
        out = []
        if self.m < 1:
            out.append(f"m must be >= 1, got {self.m}")
        if self.L < 1:
            out.append(f"L must be >= 1, got {self.L}")
        b = (self.branching,) if isinstance(self.branching, int) else self.branching
        if any(v < 2 for v in b):
            out.append(f"branching factors must be >= 2, got {self.branching}")
        if self.preset not in PRESETS:
            out.append(f"preset must be one of {', '.join(PRESETS)}, got {self.preset!r}")
        if not 0.0 < self.alpha < 1.0:
            out.append(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.alpha_eta > 1.0:
            out.append("alpha_eta must be > 1 so that the eta prior mean exists")
        elif self.preset in PRESETS and self.L >= 1:
            out += self.priors().problems()
        out += self.mcmc().problems()
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def mcmc(self):
        return McmcConfig(
            n_iter=self.n_iter,
            burn_in=self.burn_in,
            thin=self.thin,
            seed=self.seed,
            init_bandwidth=self.init_bandwidth,
            adapt_every=self.adapt_every,
            resample_every=self.resample_every,
            reanchor=self.reanchor,
            eta_target=self.eta_target,
        )

    def priors(self):
        return Priors.default(self.L, self.preset, self.alpha_eps, self.beta_eps, self.alpha_eta)

    def items(self):
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            out.append((f.name, "none" if v is None else str(v)))
        return out


PARSERS = {
    "m": int,
    "L": int,
    "branching": _branching,
    "preset": str,
    "alpha_eps": float,
    "beta_eps": float,
    "alpha_eta": float,
    "n_iter": int,
    "burn_in": int,
    "thin": int,
    "seed": int,
    "init_bandwidth": _opt(float),
    "adapt_every": _opt(int),
    "resample_every": int,
    "reanchor": _parse_bool,
    "eta_target": str,
    "alpha": float,
}


def parse_kv_lines(lines, source):
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    problems = []
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{source}:{no}: expected key=value, got {line!r}")
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out, problems


def build_run_config(file_values=None, overrides=None, source="config"):
    """Merge defaults, file values and flag overrides (in increasing priority).

    Unknown keys, unparsable values and constraint violations are all
    collected and reported together.
    """
    merged = {}
    merged.update(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    problems = []
    parsed = {}
    for k, v in merged.items():
        if k not in PARSERS:
            problems.append(f"{source}: unknown key {k!r}")
            continue
        try:
            parsed[k] = PARSERS[k](v) if isinstance(v, str) else v
        except (TypeError, ValueError):
            problems.append(f"{source}: bad value for {k}: {v!r}")
    cfg = replace(RunConfig(), **parsed)
    problems += cfg.problems()
    if problems:
        raise ConfigError(problems)
    return cfg


def read_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            values, problems = parse_kv_lines(fh, os.path.basename(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    if problems:
        raise ConfigError(problems)
    return values


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def save_samples(path, samples):
    ids = samples.component_ids
    m = samples.pseudo_targets.shape[2]
    header = ["iteration", "sigma2"]
    for cid in ids:
        header.append(f"eta_{cid}")
        header += [f"fbar_{cid}_{k}" for k in range(m)]
        header += [f"idx_{cid}_{k}" for k in range(m)]
    rows = []
    for t in range(len(samples)):
        row = [int(samples.iterations[t]), samples.sigma2[t]]
        for j in range(len(ids)):
            row.append(samples.eta[t, j])
            row += list(samples.pseudo_targets[t, j])
            row += [int(v) for v in samples.pseudo_idx[t, j]]
        rows.append(row)
    write_table(path, header, rows)


def load_samples(path, scheme, priors):
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        body = [r for r in reader if r]
    ids = []
    for h in header:
        if h.startswith("eta_"):
            ids.append(int(h[4:]))
    m = sum(1 for h in header if h.startswith(f"fbar_{ids[0]}_"))
    col = {h: i for i, h in enumerate(header)}
    arr = np.array([[float(v) for v in r] for r in body]) if body else np.zeros((0, len(header)))
    n = arr.shape[0]
    eta = np.stack([arr[:, col[f"eta_{c}"]] for c in ids], axis=1) if n else np.zeros((0, len(ids)))
    fbar = np.zeros((n, len(ids), m))
    idx = np.zeros((n, len(ids), m), dtype=int)
    for j, c in enumerate(ids):
        for k in range(m):
            fbar[:, j, k] = arr[:, col[f"fbar_{c}_{k}"]]
            idx[:, j, k] = arr[:, col[f"idx_{c}_{k}"]].astype(int)
    return PosteriorSamples(
        component_ids=ids,
        log_rho=[math.log(priors.rho[scheme[c].layer - 1]) for c in ids],
        iterations=arr[:, 0].astype(int),
        sigma2=arr[:, 1].copy(),
        eta=eta,
        pseudo_targets=fbar,
        pseudo_idx=idx,
    )


def save_run(out_dir, table, scheme, samples, cfg):
    os.makedirs(out_dir, exist_ok=True)
    data_path = os.path.join(out_dir, "data.csv")
    save_csv(data_path, table)
    save_scheme(scheme, os.path.join(out_dir, "scheme.json"))
    save_samples(os.path.join(out_dir, "samples.csv"), samples)
    lines = [f"{k}={v}" for k, v in cfg.items()]
    lines += [
        f"scheme_fingerprint={scheme.fingerprint()}",
        f"data_sha256={file_sha256(data_path)}",
        f"n={table.X.shape[0]}",
        f"d={table.X.shape[1]}",
        f"n_kept={len(samples)}",
        "acceptance=" + ",".join(fmt(v) for v in samples.acceptance),
    ]
    with open(os.path.join(out_dir, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class Run:
    table: Table
    scheme: object
    samples: PosteriorSamples
    config: RunConfig
    manifest: dict


def load_run(run_dir):
    """Reload a run directory written by :func:`save_run` and check its hashes."""
    path = os.path.join(run_dir, "manifest.txt")
    try:
        with open(path, encoding="utf-8") as fh:
            manifest, problems = parse_kv_lines(fh, "manifest.txt")
    except OSError as exc:
        raise InvalidInputError(f"cannot read run manifest {path}: {exc.strerror}") from exc
    if problems:
        raise InvalidInputError("; ".join(problems))
    keys = {f.name for f in fields(RunConfig)}
    cfg = build_run_config({k: v for k, v in manifest.items() if k in keys}, source="manifest.txt")
    data_path = os.path.join(run_dir, "data.csv")
    if file_sha256(data_path) != manifest.get("data_sha256"):
        raise InvalidInputError(f"{data_path} does not match the manifest hash")
    table = load_csv(data_path)
    scheme = load_scheme(os.path.join(run_dir, "scheme.json"))
    if scheme.fingerprint() != manifest.get("scheme_fingerprint"):
        raise InvalidInputError("scheme.json does not match the manifest fingerprint")
    samples = load_samples(os.path.join(run_dir, "samples.csv"), scheme, cfg.priors())
    return Run(table, scheme, samples, cfg, manifest)
