"""Command-line front end.

Subcommands ``curve``, ``interval``, ``region``, ``bench`` and
``simulate``. Every output is a small CSV file preceded by one ``#``
header line carrying the run metadata; infinite endpoints are empty
fields. Exit status: 0 on success, 2 on configuration errors, 3 when the
data make a statistic degenerate.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .design import PERM_MODES, RANK_TOL, DesignData, contiguous_blocks, enumerate_group
from .errors import ConfigError, MissingColumn, NonNumericCell, NumericDegeneracy, UnequalBlocks
from .invert import ROOT_TOL, ConfidenceSet, StepFunction, confidence_set, pvalue_curve
from .oracle import DGPConfig, GroupConfig, bench_curve, bench_grid, simulate_size
from .region import fast_grid, project_pvalues, region_extract
from .stats import build_conic, build_diciccio, build_linear, build_rational

log = logging.getLogger("rtinvert")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
TESTS = ("linear", "wald", "wald2d", "diciccio")


@dataclass
class Roles:
    y: str
    x1: list[str]
    x2: list[str] = field(default_factory=list)
    z: list[str] = field(default_factory=list)
    block_col: str | None = None
    n_blocks: int | None = None
    intercept: bool = True


@dataclass
class RunConfig:
    command: str
    data: Path | None
    roles: Roles | None
    perm_mode: str = "block_swap"
    perm_cap: int = 1000
    seed: int | None = 0
    test: str = "linear"
    side: str = "right"
    alpha: float = 0.05
    grid1: np.ndarray | None = None
    grid2: np.ndarray | None = None
    out: Path | None = None
    tol_root: float = ROOT_TOL
    tol_rank: float = RANK_TOL
    reps: int = 2000
    n: int = 24
    n_blocks: int = 4


def ingest_csv(path: str | Path, roles: Roles, mode: str = "block_swap") -> DesignData:
    """Read a CSV with a header row into :class:`DesignData`.

    Blocks come from ``roles.block_col`` (labels, in order of first
    appearance) or from a contiguous split into ``roles.n_blocks``.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    wanted = [roles.y, *roles.x1, *roles.x2, *roles.z]
    if roles.block_col:
        wanted.append(roles.block_col)
    missing = [c for c in wanted if c not in header]
    if missing:
        raise MissingColumn(f"column(s) not found in {path}: {', '.join(missing)}")

    def column(name: str) -> np.ndarray:
        out = np.empty(len(rows))
        for i, row in enumerate(rows):
            cell = (row[name] or "").strip()
            try:
                out[i] = float(cell)
            except ValueError:
                raise NonNumericCell(i + 1, name, cell) from None
            if not np.isfinite(out[i]):
                raise NonNumericCell(i + 1, name, cell)
        return out

    def matrix(names: list[str]) -> np.ndarray:
        return np.column_stack([column(c) for c in names]) if names else np.zeros((len(rows), 0))

    n = len(rows)
    if n == 0:
        raise ConfigError(f"{path} has no data rows")
    if roles.block_col:
        labels = [row[roles.block_col] for row in rows]
        order = list(dict.fromkeys(labels))
        blocks = [np.array([i for i, lab in enumerate(labels) if lab == key]) for key in order]
    else:
        nb = roles.n_blocks or n
        if mode == "block_swap" and n % nb:
            raise UnequalBlocks(f"n={n} rows do not split into {nb} equal blocks")
        blocks = contiguous_blocks(n, nb)
    if mode == "block_swap" and len({len(b) for b in blocks}) > 1:
        raise UnequalBlocks(f"block sizes differ: {[len(b) for b in blocks]}")
    X2 = matrix(roles.x2)
    if roles.intercept:
        X2 = np.hstack([np.ones((n, 1)), X2])
    return DesignData(column(roles.y), matrix(roles.x1), X2, matrix(roles.z), blocks)


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------


def _num(x) -> str:
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return ""
    return repr(float(x))


def _header(kind: str, meta: dict) -> str:
    return "# " + " ".join([kind] + [f"{k}={v}" for k, v in meta.items()]) + "\n"


def _parse_header(line: str) -> tuple[str, dict]:
    parts = line.lstrip("#").split()
    return parts[0], dict(p.split("=", 1) for p in parts[1:])


def format_curve(curve: StepFunction, meta: dict) -> str:
    buf = io.StringIO()
    buf.write(_header("curve", meta))
    buf.write("start,end,p\n")
    for start, end, p in curve.records(include_points=True):
        buf.write(f"{_num(start)},{_num(end)},{_num(p)}\n")
    return buf.getvalue()


def parse_curve(text: str) -> tuple[StepFunction, dict]:
    lines = text.splitlines()
    _, meta = _parse_header(lines[0])
    M = int(meta["M"])
    bps, counts, pcounts = [], [], []
    for line in lines[2:]:
        s, e, p = line.split(",")
        c = -1 if p == "" else int(round(float(p) * M))
        if s != "" and s == e:
            bps.append(float(s))
            pcounts.append(c)
        else:
            counts.append(c)
    return StepFunction(np.array(bps), np.array(counts), np.array(pcounts, dtype=int), M, meta.get("side", "right")), meta


def format_interval(cs: ConfidenceSet, meta: dict) -> str:
    buf = io.StringIO()
    buf.write(_header("interval", {**meta, "alpha": repr(cs.alpha)}))
    buf.write("lo,hi,lo_closed,hi_closed\n")
    for iv in cs:
        buf.write(f"{_num(iv.lo)},{_num(iv.hi)},{int(iv.lo_closed)},{int(iv.hi_closed)}\n")
    return buf.getvalue()


def interval_from_curve_text(text: str, alpha: float) -> str:
    """Re-derive the interval file from a curve file."""
    curve, meta = parse_curve(text)
    return format_interval(confidence_set(curve, alpha), meta)


def parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise ConfigError(f"grid must be min:max:steps, got {text!r}") from None
    if steps < 1 or (steps > 1 and not hi > lo):
        raise ConfigError(f"bad grid {text!r}")
    return np.linspace(lo, hi, steps)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _emit(text: str, out: Path | None, suffix: str = "") -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = out if not suffix else out.with_name(out.stem + suffix)
    path.write_text(text)
    log.info("wrote %s", path)


def _setup(cfg: RunConfig):
    data = ingest_csv(cfg.data, cfg.roles, cfg.perm_mode)
    group = enumerate_group(data.blocks, cfg.perm_mode, cfg.perm_cap, cfg.seed)
    meta = {"M": group.M, "n": data.n, "test": cfg.test, "side": _side(cfg), "seed": cfg.seed}
    return data, group, meta


def _side(cfg: RunConfig) -> str:
    return cfg.side if cfg.test == "linear" else "wald"


def _scalar_curve(cfg: RunConfig):
    if cfg.test not in ("linear", "wald"):
        raise ConfigError(f"test {cfg.test!r} has no scalar curve; use 'region'")
    data, group, meta = _setup(cfg)
    if cfg.test == "linear":
        fam = build_linear(data, group, cfg.tol_rank)
    else:
        fam = build_rational(data, group, cfg.tol_rank)
    return pvalue_curve(fam, _side(cfg), root_tol=cfg.tol_root), meta


def cmd_curve(cfg: RunConfig) -> None:
    curve, meta = _scalar_curve(cfg)
    _emit(format_curve(curve, meta), cfg.out)


def cmd_interval(cfg: RunConfig) -> None:
    curve, meta = _scalar_curve(cfg)
    _emit(format_interval(confidence_set(curve, cfg.alpha), meta), cfg.out)


def cmd_region(cfg: RunConfig) -> None:
    if cfg.test not in ("wald2d", "diciccio"):
        raise ConfigError("region needs --test wald2d or diciccio")
    if cfg.grid1 is None or cfg.grid2 is None or cfg.grid1.size < 2 or cfg.grid2.size < 2:
        raise ConfigError("region needs --grid1 and --grid2 with at least 2 steps each")
    data, group, meta = _setup(cfg)
    fam = build_conic(data, group, cfg.tol_rank) if cfg.test == "wald2d" else build_diciccio(data, group)
    grid = fast_grid(fam, cfg.grid1, cfg.grid2)
    region = region_extract(grid, cfg.alpha)
    meta = {**meta, "alpha": repr(cfg.alpha), "approximate": "true"}
    comp_of = -np.ones(grid.counts.shape, dtype=int)
    for c, comp in enumerate(region.components):
        comp_of[tuple(comp.cells.T)] = c

    buf = io.StringIO()
    buf.write(_header("region", meta))
    buf.write("i,j,beta1,beta2,p,in_region,component\n")
    for i, j, x, y, p in grid.records():
        buf.write(f"{i},{j},{_num(x)},{_num(y)},{_num(p)},{int(region.mask[i, j])},{comp_of[i, j]}\n")
    _emit(buf.getvalue(), cfg.out)

    buf = io.StringIO()
    buf.write(_header("components", meta))
    buf.write("component,n_cells,lo1,hi1,lo2,hi2\n")
    for c, comp in enumerate(region.components):
        buf.write(f"{c},{len(comp.cells)}," + ",".join(_num(v) for v in comp.bbox) + "\n")
    _emit(buf.getvalue(), cfg.out, ".components.csv" if cfg.out else "")

    buf = io.StringIO()
    buf.write(_header("projected", meta))
    buf.write("axis,value,p\n")
    for ax in (1, 2):
        pc = project_pvalues(grid, ax)
        for v, c in zip(pc.axis.tolist(), pc.counts.tolist()):
            buf.write(f"{ax},{_num(v)},{_num(c / pc.M)}\n")
    _emit(buf.getvalue(), cfg.out, ".projected.csv" if cfg.out else "")


def cmd_bench(cfg: RunConfig) -> None:
    if cfg.grid1 is None:
        raise ConfigError("bench needs --grid1 (and --grid2 for two-coefficient tests)")
    data, group, meta = _setup(cfg)
    if cfg.test in ("wald2d", "diciccio"):
        if cfg.grid2 is None:
            raise ConfigError("bench with a two-coefficient test needs --grid2")
        report = bench_grid(data, group, cfg.grid1, cfg.grid2, "wald_2d" if cfg.test == "wald2d" else "diciccio")
    else:
        kind = {"right": "linear_right", "left": "linear_left", "two_sided": "two_sided"}[cfg.side]
        report = bench_curve(data, group, cfg.grid1, kind if cfg.test == "linear" else "wald_scalar")
    buf = io.StringIO()
    buf.write(_header("bench", meta))
    buf.write("method,n,M,grid_size,seconds,speedup,match\n")
    for r in report.records():
        buf.write(f"{r['method']},{r['n']},{r['M']},{r['grid_size']},{r['seconds']:.6f},{r['speedup']:.3f},{str(r['match']).lower()}\n")
    _emit(buf.getvalue(), cfg.out)


def cmd_simulate(cfg: RunConfig) -> None:
    kinds = {"right": "linear_right", "left": "linear_left", "two_sided": "two_sided"}
    if cfg.test == "linear":
        kind, dgp = kinds[cfg.side], DGPConfig(n=cfg.n, n_blocks=cfg.n_blocks)
    elif cfg.test == "wald":
        kind, dgp = "wald_scalar", DGPConfig(n=cfg.n, n_blocks=cfg.n_blocks, k=2)
    else:
        raise ConfigError("simulate supports --test linear or wald")
    seed = cfg.seed or 0
    rate = simulate_size(dgp, GroupConfig(cfg.perm_mode, cfg.perm_cap, seed), cfg.alpha, cfg.reps, seed, kind)
    meta = {"n": cfg.n, "blocks": cfg.n_blocks, "test": cfg.test, "side": _side(cfg), "seed": seed}
    _emit(_header("simulate", meta) + "reps,alpha,rejection_rate\n" + f"{cfg.reps},{cfg.alpha!r},{rate!r}\n", cfg.out)


COMMANDS = {
    "curve": cmd_curve,
    "interval": cmd_interval,
    "region": cmd_region,
    "bench": cmd_bench,
    "simulate": cmd_simulate,
}


def _split(s: str | None) -> list[str]:
    return [c.strip() for c in s.split(",") if c.strip()] if s else []


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", type=Path, help="CSV file with a header row")
    common.add_argument("--y", help="outcome column")
    common.add_argument("--x1", help="comma-separated regressors of interest")
    common.add_argument("--x2", help="comma-separated nuisance regressors")
    common.add_argument("--z", help="comma-separated instruments")
    common.add_argument("--no-intercept", action="store_true", help="do not add a constant to the nuisance regressors")
    common.add_argument("--blocks", type=int, help="split rows into this many contiguous blocks")
    common.add_argument("--block-col", help="column whose labels define the blocks")
    common.add_argument("--perm-mode", choices=PERM_MODES, default="block_swap")
    common.add_argument("--perm-cap", type=int, default=1000, help="enumerate up to this many permutations, else sample")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--test", choices=TESTS, default="linear")
    common.add_argument("--side", choices=("right", "left", "two_sided"), default="right")
    common.add_argument("--alpha", type=float, default=0.05)
    common.add_argument("--grid1", type=parse_grid, help="min:max:steps")
    common.add_argument("--grid2", type=parse_grid, help="min:max:steps")
    common.add_argument("--out", type=Path, help="output file (stdout if omitted)")
    common.add_argument("--tol-root", type=float, default=ROOT_TOL)
    common.add_argument("--tol-rank", type=float, default=RANK_TOL)
    common.add_argument("--reps", type=int, default=2000, help="simulate: Monte Carlo replications")
    common.add_argument("--n", type=int, default=24, help="simulate: sample size")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="rtinvert", description="Exact inversion of randomization tests.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).strip().splitlines()[0] if fn.__doc__ else name)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    if not 0.0 < args.alpha < 1.0:
        raise ConfigError(f"--alpha must lie in (0, 1), got {args.alpha}")
    roles = None
    if args.command != "simulate":
        if args.data is None or args.y is None or not args.x1:
            raise ConfigError("--data, --y and --x1 are required")
        roles = Roles(
            args.y, _split(args.x1), _split(args.x2), _split(args.z),
            args.block_col, args.blocks, not args.no_intercept,
        )
        used = [roles.y, *roles.x1, *roles.x2, *roles.z] + ([roles.block_col] if roles.block_col else [])
        if len(set(used)) != len(used):
            raise ConfigError("column roles must be disjoint")
        if roles.block_col is None and roles.n_blocks is None:
            raise ConfigError("give --blocks or --block-col")
    return RunConfig(
        command=args.command, data=args.data, roles=roles, perm_mode=args.perm_mode,
        perm_cap=args.perm_cap, seed=args.seed, test=args.test, side=args.side, alpha=args.alpha,
        grid1=args.grid1, grid2=args.grid2, out=args.out, tol_root=args.tol_root,
        tol_rank=args.tol_rank, reps=args.reps, n=args.n, n_blocks=args.blocks or 4,
    )


def run(cfg: RunConfig) -> int:
    try:
        COMMANDS[cfg.command](cfg)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericDegeneracy as exc:
        print(f"numeric degeneracy: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
