"""Command-line front end: synthetic data, dataset ingestion, benchmark
tables, Gibbs fitting, and prediction.

Commands: synth | table1 | table2 | fit | predict | ingest.  Global flags
--seed, --threads, --config, --out.  Every output file starts with a
header block (tool version, resolved configuration, master seed) that is
sufficient to replay the run bit-identically in serial mode; floats are
written with 17 significant digits.  Exit codes: 0 success, 2 config or
parse error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__ as _version
from . import approx as approx_mod
from . import diagnostics, infer, kernels, linalg, sketch
from .errors import (
    DimensionMismatch,
    GpSketchError,
    InvalidShape,
    ParseError,
    SchemaMismatch,
)
from .kernels import Dataset, KernelSpec

_CONFIG_ERRORS = (ParseError, SchemaMismatch, InvalidShape, DimensionMismatch,
                  ValueError)


def _fmt(v) -> str:
    if isinstance(v, float) or isinstance(v, np.floating):
        return f"{float(v):.17g}"
    return str(v)


def _header_lines(command: str, seed: int, config: dict) -> list[str]:
    items = " ".join(f"{k}={_fmt(v)}" for k, v in sorted(config.items()))
    return [
        f"# gpsketch {_version}",
        f"# command: {command}",
        f"# seed: {seed}",
        f"# config: {items}",
    ]


def _write_table(path: str, command: str, seed: int, config: dict,
                 columns: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    for line in _header_lines(command, seed, config):
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    data = buf.getvalue()
    if path == "-":
        sys.stdout.write(data)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(data)


def _pretty_print(columns: list[str], rows: list[list], limit: int = 40) -> None:
    cells = [[str(c) for c in columns]]
    for row in rows[:limit]:
        cells.append([f"{v:.4f}" if isinstance(v, (float, np.floating))
                      else str(v) for v in row])
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    for r in cells:
        print("  ".join(s.rjust(w) for s, w in zip(r, widths)))
    if len(rows) > limit:
        print(f"... ({len(rows) - limit} more rows in the output file)")


def read_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"{path}:{ln}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _coerce(raw: str, default):
    if isinstance(default, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if default is None:
        for cast in (int, float):
            try:
                return cast(raw)
            except ValueError:
                continue
        return raw
    return type(default)(raw)


def _merge_config(args: argparse.Namespace, defaults: dict) -> None:
    """Resolve each option as: CLI flag > config file > built-in default."""
    file_cfg = read_config_file(args.config) if args.config else {}
    for key, default in defaults.items():
        if getattr(args, key, None) is None:
            if key in file_cfg:
                setattr(args, key, _coerce(file_cfg[key], default))
            else:
                setattr(args, key, default)


# ---------------------------------------------------------------------------
# dataset files

def write_dataset(path: str, data: Dataset, command: str, seed: int,
                  config: dict) -> None:
    d = data.dim
    columns = [f"x{i + 1}" for i in range(d)] + ["y", "split"]
    train, test = data.split()
    labels = np.empty(data.n, dtype=object)
    labels[train] = "train"
    labels[test] = "test"
    rows = [list(data.x[i]) + [data.y[i], labels[i]] for i in range(data.n)]
    _write_table(path, command, seed, config, columns, rows)


def read_dataset(path: str) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    body = [(ln, line) for ln, line in enumerate(lines, 1)
            if line.strip() and not line.startswith("#")]
    if not body:
        raise ParseError(f"{path}: no data rows")
    header = [c.strip() for c in body[0][1].strip().split(",")]
    d = sum(1 for c in header if c.startswith("x"))
    expected = [f"x{i + 1}" for i in range(d)] + ["y", "split"]
    if header != expected:
        raise ParseError(f"{path}:{body[0][0]}: header {header} != {expected}")
    xs, ys, split = [], [], []
    for ln, line in body[1:]:
        parts = [c.strip() for c in line.strip().split(",")]
        if len(parts) != d + 2:
            raise ParseError(f"{path}:{ln}: expected {d + 2} fields, got {len(parts)}")
        try:
            xs.append([float(v) for v in parts[:d]])
            ys.append(float(parts[d]))
        except ValueError as exc:
            raise ParseError(f"{path}:{ln}: {exc}") from exc
        if parts[d + 1] not in ("train", "test"):
            raise ParseError(f"{path}:{ln}: split must be train|test, "
                             f"got {parts[d + 1]!r}")
        split.append(parts[d + 1])
    split = np.array(split)
    return Dataset(np.array(xs), np.array(ys),
                   train_idx=np.flatnonzero(split == "train"),
                   test_idx=np.flatnonzero(split == "test"))


def _seeded_split(n: int, train_frac: float, seed: int):
    rng = np.random.default_rng([seed, 0xD5])
    perm = rng.permutation(n)
    n_train = int(round(train_frac * n))
    n_train = min(max(n_train, 1), n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


# ---------------------------------------------------------------------------
# synth

def parse_bumps(text: str):
    """Parse "center:width:amplitude,..." (empty string: no bumps)."""
    bumps = []
    if text.strip():
        for ln, part in enumerate(text.split(","), 1):
            fields = part.split(":")
            if len(fields) != 3:
                raise ParseError(f"bump {ln}: expected center:width:amplitude")
            c, w, a = (float(v) for v in fields)
            if not 0.0 <= c <= 1.0:
                raise InvalidShape(f"bump {ln}: center {c} outside [0, 1]")
            if w <= 0:
                raise InvalidShape(f"bump {ln}: width must be positive")
            bumps.append((c, w, a))
    return bumps


def synthetic_dataset(n: int, bumps, noise_var: float, train_frac: float,
                      seed: int) -> Dataset:
    """Gaussian-bump mixture on an equispaced grid in [0, 1] plus noise."""
    if n < 2:
        raise InvalidShape("need at least 2 points")
    if not 0.0 < train_frac < 1.0:
        raise InvalidShape("train fraction must be inside (0, 1)")
    if noise_var < 0:
        raise InvalidShape("noise variance must be nonnegative")
    x = np.linspace(0.0, 1.0, n)
    f = np.zeros(n)
    for c, w, a in bumps:
        f += a * np.exp(-((x - c) ** 2) / w)
    rng = np.random.default_rng([seed, 0x51])
    y = f + np.sqrt(noise_var) * rng.standard_normal(n)
    train, test = _seeded_split(n, train_frac, seed)
    return Dataset(x, y, train_idx=train, test_idx=test)


def cmd_synth(args) -> int:
    bumps = parse_bumps(args.bumps)
    data = synthetic_dataset(args.n, bumps, args.noise_var, args.train_frac,
                             args.seed)
    config = dict(n=args.n, bumps=args.bumps, noise_var=args.noise_var,
                  train_frac=args.train_frac)
    write_dataset(args.out, data, "synth", args.seed, config)
    print(f"wrote {data.n} points ({data.train_idx.size} train, "
          f"{data.test_idx.size} test) to {args.out}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# table1 / table2

def _run_cells(fn, cells, threads: int):
    if threads <= 1:
        return [fn(c) for c in cells]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, cells))


def cmd_table1(args) -> int:
    ranks = [int(v) for v in args.ranks.split(",")]
    methods = args.methods.split(",")
    k = diagnostics.grid_kernel_matrix(args.n, args.lo, args.hi, args.theta1)
    cells = [(m, r) for m in methods for r in ranks]

    def run(cell):
        method, rank = cell
        return diagnostics.fixed_rank_study(
            k, ranks=(rank,), methods=(method,), n_seeds=args.seeds,
            master_seed=args.seed)

    reports = [r for group in _run_cells(run, cells, args.threads) for r in group]
    columns = ["kind", "method", "rank", "seed", "frobenius_error",
               "spectral_error", "condition_core", "condition_spectrum",
               "time_s", "error"]
    rows = []
    for r in reports:
        rows.append(["cell", r.method, r.rank,
                     "" if r.seed is None else r.seed, r.frobenius_error,
                     r.spectral_error, r.condition_core, r.condition_spectrum,
                     r.wall_time, r.error or ""])
    for method in methods:
        for rank in ranks:
            group = [r for r in reports
                     if r.method == method and r.rank == rank and not r.error]
            if group:
                rows.append([
                    "median", method, rank, "",
                    float(np.median([r.frobenius_error for r in group])),
                    float(np.median([r.spectral_error for r in group])),
                    float(np.median([r.condition_core for r in group])),
                    float(np.median([r.condition_spectrum for r in group])),
                    float(np.median([r.wall_time for r in group])), ""])
    config = dict(n=args.n, lo=args.lo, hi=args.hi, theta1=args.theta1,
                  ranks=args.ranks, seeds=args.seeds, methods=args.methods)
    _write_table(args.out, "table1", args.seed, config, columns, rows)
    _pretty_print(columns, [r for r in rows if r[0] == "median"])
    return 0


def cmd_table2(args) -> int:
    methods = args.methods.split(",")
    problem = diagnostics.ExpDecaySpec(args.n, args.decay)
    reports = diagnostics.target_error_study(
        problem, args.eps, methods=tuple(methods), n_seeds=args.seeds,
        master_seed=args.seed)
    columns = ["kind", "method", "seed", "required_rank", "optimal_rank",
               "achieved_residual", "condition_core", "condition_spectrum",
               "exhausted", "error"]
    if args.include_times:
        columns.insert(-1, "time_s")
    rows = []
    for r in reports:
        row = ["cell", r.method, "" if r.seed is None else r.seed,
               r.required_rank, r.optimal_rank, r.achieved_residual,
               r.condition_core, r.condition_spectrum, int(r.exhausted)]
        if args.include_times:
            row.append(r.wall_time)
        rows.append(row + [r.error or ""])
    for method in methods:
        group = [r for r in reports if r.method == method and not r.error]
        if group:
            row = ["median", method, "",
                   float(np.median([r.required_rank for r in group])),
                   group[0].optimal_rank,
                   float(np.median([r.achieved_residual for r in group])),
                   float(np.median([r.condition_core for r in group])),
                   float(np.median([r.condition_spectrum for r in group])), ""]
            if args.include_times:
                row.append(float(np.median([r.wall_time for r in group])))
            rows.append(row + [""])
    config = dict(n=args.n, decay=args.decay, eps=args.eps, seeds=args.seeds,
                  methods=args.methods)
    _write_table(args.out, "table2", args.seed, config, columns, rows)
    _pretty_print(columns, [r for r in rows if r[0] == "median"])
    return 0


# ---------------------------------------------------------------------------
# fit / predict

def _parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, count = text.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError as exc:
        raise ParseError(f"--theta1-grid expects lo:hi:count, got {text!r}") from exc
    if count < 1 or hi <= lo:
        raise InvalidShape("theta1 grid needs hi > lo and count >= 1")
    grid = np.linspace(lo, hi, count + 1)[1:] if lo == 0.0 else \
        np.linspace(lo, hi, count)
    return grid


def _approx_config(args) -> infer.ApproxConfig:
    if args.mode == "fixed-rank":
        if args.rank is None:
            raise InvalidShape("fixed-rank mode requires --rank")
        return infer.ApproxConfig(method=args.method, rank=args.rank)
    if args.eps is None:
        raise InvalidShape("target-error mode requires --eps")
    return infer.ApproxConfig(method=args.method, eps=args.eps)


def _plugin_model(data: Dataset, args, theta1: float,
                  theta2: float) -> approx_mod.GpApproximation:
    """Model over all locations at the plug-in hyperparameters.

    Built at the reference scale so the adaptive target keeps the meaning
    it had inside the sampler, then rescaled to the plug-in theta2.  In
    target-error mode the knot methods size themselves with the
    residual-trace certificate, mirroring the sampler's grid build.
    """
    spec = KernelSpec(theta1, 1.0)
    k = kernels.gram(spec, data.x)
    if args.method == "rp":
        if args.mode == "fixed-rank":
            model = sketch.nystrom_fixed_rank(k, args.rank, seed=args.seed)
        else:
            phi = sketch.adaptive_rangefinder(k, args.eps, seed=args.seed)
            model = sketch.nystrom_from_projection(k, phi)
        fitted = approx_mod.rm_correct(model, np.diag(k), kernel=spec, x=data.x)
    else:
        if args.mode == "fixed-rank":
            rank = args.rank
        else:
            rank = max(linalg.partial_cholesky(k, trace_tol=args.eps).rank, 1)
        if args.method == "pp1":
            knots = approx_mod.select_knots_random(data.n, min(rank, data.n),
                                                   seed=args.seed)
        else:
            knots = approx_mod.select_knots_pivoted(k, rank=min(rank, data.n))
        fitted = approx_mod.sor_model(spec, data.x, knots, correct_variance=True)
    lr = fitted.model
    scaled = sketch.LowRankModel(lr.u, lr.d2 / theta2, phi=lr.phi,
                                 d_m=None if lr.d_m is None else lr.d_m / theta2,
                                 core_lower=lr.core_lower, v=lr.v)
    return approx_mod.GpApproximation(fitted.method, scaled,
                                      kernel=KernelSpec(theta1, theta2),
                                      x=fitted.x, knots=fitted.knots)


def _predict_with_means(data: Dataset, args, tau: float, theta1: float,
                        theta2: float):
    model = _plugin_model(data, args, theta1, theta2)
    train, test = data.split()
    mean, cov = infer.predict(model, tau, data.y[train], train, test)
    return mean, cov.diagonal()


def _write_predictions(path, data, test_idx, mean, var, command, seed, config):
    columns = [f"x{i + 1}" for i in range(data.dim)] + ["y", "y_pred", "pred_var"]
    rows = [list(data.x[j]) + [data.y[j], mean[i], var[i]]
            for i, j in enumerate(test_idx)]
    _write_table(path, command, seed, config, columns, rows)


def cmd_fit(args) -> int:
    data = read_dataset(args.data)
    train, test = data.split()
    grid = _parse_grid(args.theta1_grid)
    priors = infer.PriorSpec(a1=args.a1, b1=args.b1, a2=args.a2, b2=args.b2,
                             theta1_grid=grid)
    config = _approx_config(args)
    pre = infer.build_grid(data.x[train], priors, config, seed=args.seed)
    samples = infer.gibbs(data, priors, pre, iterations=args.iterations,
                          burnin=args.burnin, seed=args.seed)

    summary = samples.summary()
    columns = ["name", "mean", "ci_low", "ci_high", "ess"]
    rows = [[name, s["mean"], s["ci_low"], s["ci_high"], s["ess"]]
            for name, s in summary.items()]
    if args.mode == "target-error":
        rows.append(["avg_required_rank", samples.average_rank, "", "", ""])

    cfg = dict(data=args.data, method=args.method, mode=args.mode,
               rank=args.rank if args.rank is not None else "",
               eps=args.eps if args.eps is not None else "",
               theta1_grid=args.theta1_grid, a1=args.a1, b1=args.b1,
               a2=args.a2, b2=args.b2, iterations=args.iterations,
               burnin=args.burnin)

    if args.samples_out:
        scol = ["iter", "tau", "theta1", "theta2"]
        srows = [[args.burnin + i, samples.tau[i], samples.theta1[i],
                  samples.theta2[i]] for i in range(samples.tau.size)]
        _write_table(args.samples_out, "fit", args.seed, cfg, scol, srows)

    if test.size == 0:
        print("warning: empty test split; MSPE omitted", file=sys.stderr)
    else:
        mean, var = _predict_with_means(
            data, args, summary["tau"]["mean"], summary["theta1"]["mean"],
            summary["theta2"]["mean"])
        rows.append(["mspe", infer.mspe(mean, data.y[test]), "", "", ""])
        if args.predictions_out:
            _write_predictions(args.predictions_out, data, test, mean, var,
                               "fit", args.seed, cfg)

    _write_table(args.out, "fit", args.seed, cfg, columns, rows)
    _pretty_print(columns, rows)
    return 0


def read_samples(path: str):
    with open(path, encoding="utf-8") as fh:
        lines = [l for l in fh if l.strip() and not l.startswith("#")]
    header = [c.strip() for c in lines[0].strip().split(",")]
    if header != ["iter", "tau", "theta1", "theta2"]:
        raise ParseError(f"{path}: unexpected samples header {header}")
    vals = np.array([[float(v) for v in line.strip().split(",")]
                     for line in lines[1:]])
    if vals.size == 0:
        raise ParseError(f"{path}: no samples")
    return vals[:, 1], vals[:, 2], vals[:, 3]


def cmd_predict(args) -> int:
    _approx_config(args)  # validates the mode/rank/eps combination early
    data = read_dataset(args.data)
    _, test = data.split()
    if test.size == 0:
        print("warning: empty test split; nothing to predict", file=sys.stderr)
        return 0
    tau, th1, th2 = read_samples(args.samples)
    cfg = dict(data=args.data, samples=args.samples, method=args.method,
               mode=args.mode, rank=args.rank if args.rank is not None else "",
               eps=args.eps if args.eps is not None else "")
    mean, var = _predict_with_means(data, args, float(np.mean(tau)),
                                    float(np.mean(th1)), float(np.mean(th2)))
    _write_predictions(args.out, data, test, mean, var, "predict", args.seed,
                       cfg)
    print(f"wrote {test.size} predictions to {args.out}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# ingest

_ABALONE_SEX = {"M": (1.0, 0.0, 0.0), "F": (0.0, 1.0, 0.0),
                "I": (0.0, 0.0, 1.0)}


def _standardize(features: np.ndarray):
    mean = features.mean(axis=0)
    sd = features.std(axis=0)
    sd[sd == 0] = 1.0
    return (features - mean) / sd, mean, sd


def ingest_rows(rows: list[list[str]], schema: str, response_col: int | None):
    """Map raw rows to (features, response) per the declared schema."""
    if schema == "abalone":
        bad = [i for i, r in enumerate(rows) if len(r) != 9
               or r[0] not in _ABALONE_SEX]
        if bad:
            raise SchemaMismatch(
                f"abalone schema violated on rows {bad[:5]} "
                "(need 9 columns, sex in M/F/I)")
        feats = np.array([list(_ABALONE_SEX[r[0]]) + [float(v) for v in r[1:8]]
                          for r in rows])
        resp = np.array([float(r[8]) for r in rows])
        return feats, resp
    if schema == "sarcos":
        bad = [i for i, r in enumerate(rows) if len(r) < 22]
        if bad:
            raise SchemaMismatch(
                f"sarcos schema needs >= 22 columns; offending rows {bad[:5]}")
        feats = np.array([[float(v) for v in r[:21]] for r in rows])
        resp = np.array([float(r[21]) for r in rows])
        return feats, resp
    if schema == "numeric":
        width = len(rows[0])
        bad = [i for i, r in enumerate(rows) if len(r) != width]
        if bad:
            raise SchemaMismatch(f"ragged rows {bad[:5]} (expected {width} columns)")
        mat = np.array([[float(v) for v in r] for r in rows])
        rcol = width - 1 if response_col is None else response_col - 1
        if not 0 <= rcol < width:
            raise SchemaMismatch(f"response column {response_col} out of range")
        keep = [j for j in range(width) if j != rcol]
        return mat[:, keep], mat[:, rcol]
    raise SchemaMismatch(f"unknown schema {schema!r}")


def _is_canonical_header(fields: list[str]) -> bool:
    d = sum(1 for c in fields if c.startswith("x"))
    return d >= 1 and fields == [f"x{i + 1}" for i in range(d)] + ["y", "split"]


def cmd_ingest(args) -> int:
    with open(args.raw, encoding="utf-8") as fh:
        raw_rows = []
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "," in line:
                raw_rows.append([c.strip() for c in line.split(",")])
            else:
                raw_rows.append(line.split())
    if raw_rows and _is_canonical_header(raw_rows[0]):
        # already-canonical input: pass through, keeping its split column
        data = read_dataset(args.raw)
        config = dict(raw=args.raw, schema="canonical")
        write_dataset(args.out, data, "ingest", args.seed, config)
        print(f"passed through {data.n} canonical rows to {args.out}",
              file=sys.stderr)
        return 0
    if not raw_rows:
        raise ParseError(f"{args.raw}: no data rows")
    try:
        feats, resp = ingest_rows(raw_rows, args.schema, args.response_col)
    except ValueError as exc:
        raise SchemaMismatch(f"{args.raw}: non-numeric field ({exc})") from exc

    config = dict(raw=args.raw, schema=args.schema,
                  train_frac=args.train_frac, standardize=not args.no_standardize,
                  standardize_response=args.standardize_response)
    if not args.no_standardize:
        feats, mean, sd = _standardize(feats)
        config.update({f"feature_mean_{i + 1}": m for i, m in enumerate(mean)})
        config.update({f"feature_scale_{i + 1}": s for i, s in enumerate(sd)})
    if args.standardize_response:
        resp, rmean, rsd = _standardize(resp.reshape(-1, 1))
        resp = resp.ravel()
        config["response_mean"] = float(rmean[0])
        config["response_scale"] = float(rsd[0])
    train, test = _seeded_split(feats.shape[0], args.train_frac, args.seed)
    data = Dataset(feats, resp, train_idx=train, test_idx=test)
    write_dataset(args.out, data, "ingest", args.seed, config)
    print(f"ingested {data.n} rows ({feats.shape[1]} features) to {args.out}",
          file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for independent cells")
    p.add_argument("--config", type=str, default=None,
                   help="flat key=value config file; flags win")
    p.add_argument("--out", type=str, default=None, help="output path ('-' stdout)")


_COMMON_DEFAULTS = dict(seed=0, threads=1, out="-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpsketch",
        description="Reduced-rank GP regression via randomized sketching")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic bump-mixture dataset")
    _add_common(p)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--bumps", type=str, default=None,
                   help="center:width:amplitude[,...]; empty for pure noise")
    p.add_argument("--noise-var", type=float, default=None)
    p.add_argument("--train-frac", type=float, default=None)
    p.set_defaults(func=cmd_synth, defaults=dict(
        n=500, bumps="0.2:0.01:2,0.5:0.004:-1.5,0.8:0.02:1", noise_var=0.25,
        train_frac=0.9, **_COMMON_DEFAULTS))

    p = sub.add_parser("table1", help="fixed-rank error/conditioning study")
    _add_common(p)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--lo", type=float, default=None)
    p.add_argument("--hi", type=float, default=None)
    p.add_argument("--theta1", type=float, default=None)
    p.add_argument("--ranks", type=str, default=None)
    p.add_argument("--seeds", type=int, default=None)
    p.add_argument("--methods", type=str, default=None)
    p.set_defaults(func=cmd_table1, defaults=dict(
        n=1000, lo=0.1, hi=100.0, theta1=1.0, ranks="10,25,50,100", seeds=50,
        methods="rp,pp1,pp2", **_COMMON_DEFAULTS))

    p = sub.add_parser("table2", help="target-error required-rank study")
    _add_common(p)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--decay", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--seeds", type=int, default=None)
    p.add_argument("--methods", type=str, default=None)
    p.add_argument("--include-times", action="store_true",
                   help="add wall times (breaks byte-identical replay)")
    p.set_defaults(func=cmd_table2, defaults=dict(
        n=100, decay=0.5, eps=0.1, seeds=50, methods="rp,pp1,pp2",
        **_COMMON_DEFAULTS))

    def add_model_flags(p):
        p.add_argument("--method", type=str, default=None,
                       choices=["rp", "pp1", "pp2"])
        p.add_argument("--mode", type=str, default=None,
                       choices=["fixed-rank", "target-error"])
        p.add_argument("--rank", type=int, default=None)
        p.add_argument("--eps", type=float, default=None)

    p = sub.add_parser("fit", help="Gibbs fit of kernel hyperparameters")
    _add_common(p)
    p.add_argument("--data", type=str, required=True)
    add_model_flags(p)
    p.add_argument("--theta1-grid", type=str, default=None,
                   help="lo:hi:count (lo=0 excludes the left endpoint)")
    p.add_argument("--a1", type=float, default=None)
    p.add_argument("--b1", type=float, default=None)
    p.add_argument("--a2", type=float, default=None)
    p.add_argument("--b2", type=float, default=None)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--burnin", type=int, default=None)
    p.add_argument("--samples-out", type=str, default=None)
    p.add_argument("--predictions-out", type=str, default=None)
    p.set_defaults(func=cmd_fit, defaults=dict(
        method="rp", mode="target-error", rank=None, eps=0.1,
        theta1_grid="0:2:2000", a1=1.0, b1=10.0, a2=2.0, b2=20.0,
        iterations=2000, burnin=500, samples_out=None, predictions_out=None,
        **_COMMON_DEFAULTS))

    p = sub.add_parser("predict", help="plug-in prediction from a samples file")
    _add_common(p)
    p.add_argument("--data", type=str, required=True)
    p.add_argument("--samples", type=str, required=True)
    add_model_flags(p)
    p.set_defaults(func=cmd_predict, defaults=dict(
        method="rp", mode="target-error", rank=None, eps=0.1,
        **_COMMON_DEFAULTS))

    p = sub.add_parser("ingest", help="map a raw file to the canonical dataset CSV")
    _add_common(p)
    p.add_argument("--raw", type=str, required=True)
    p.add_argument("--schema", type=str, default=None,
                   choices=["abalone", "sarcos", "numeric"])
    p.add_argument("--response-col", type=int, default=None,
                   help="1-based response column (numeric schema)")
    p.add_argument("--train-frac", type=float, default=None)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--standardize-response", action="store_true")
    p.set_defaults(func=cmd_ingest, defaults=dict(
        schema="numeric", train_frac=0.9, **_COMMON_DEFAULTS))

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _merge_config(args, args.defaults)
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GpSketchError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
