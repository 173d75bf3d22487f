"""Batch front end.

    abelgauge <command> [--config FILE] [--key value ...]

Commands: verify, census, paths, exact, mcmc, bounds, tv, couple. The config
file holds flat ``key = value`` lines (``#`` starts a comment); any key may
also be given as a flag, and flags win. Every output starts with a metadata
record echoing the resolved config. Exit status: 0 when every check in scope
passes, 1 when one fails, 2 for an invalid config, 3 when a resource budget
is exceeded.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .abelian_group import alpha, parse_group
from .cell_complex import (Box, Cell, DifferentialForm, anti_derivative, exterior_derivative, hodge_star,
                           is_closed, parse_box, unit_box)
from .errors import DomainError, PreconditionError, ResourceError
from .estimators import (LocalFunction, coupled_sample, derive_seeds, farthest_plaquette, proposition31_report,
                         proposition33_reports, theorem11_report, theorem12_report, theorem13_report,
                         theorem14_report, trace_rho)
from .gibbs_measure import activity, exact_distribution, prob_ratio, run_chain
from .vortex_graph import count_optimal_paths, minimal_vortex_census

COMMANDS = ("verify", "census", "paths", "exact", "mcmc", "bounds", "tv", "couple")


class ConfigError(Exception):
    pass


def _ints(text: str) -> list[int]:
    """``3`` or ``2,4`` or ``2..6``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",")]


def parse_plaquette(text: str) -> Cell:
    """``x1,x2,x3,x4:i,j`` with 0-based directions; a leading ``-`` flips the orientation."""
    text = text.strip()
    sign = 1
    if text.startswith("-"):
        sign, text = -1, text[1:]
    base, _, dirs = text.partition(":")
    if not dirs:
        raise DomainError(f"plaquette {text!r} needs the form x1,x2,x3,x4:i,j")
    c = Cell(tuple(int(x) for x in base.split(",")), tuple(int(d) for d in dirs.split(",")))
    if c.k != 2:
        raise DomainError("a plaquette has two directions")
    return c if sign > 0 else -c


def _sampler(text: str) -> str:
    if text not in ("heatbath", "metropolis"):
        raise ValueError(f"sampler must be heatbath or metropolis, not {text!r}")
    return text


def _fmt(text: str) -> str:
    if text not in ("csv", "jsonl"):
        raise ValueError(f"format must be csv or jsonl, not {text!r}")
    return text


# key -> (parser, default as text, help)
KEYS = {
    "group": (parse_group, "Z2", "structure group, e.g. Z2 or Z2xZ3"),
    "box": (parse_box, "0..1,0..1,0..1,0..1", "box as lo..hi per axis"),
    "inner_box": (parse_box, None, "inner box for tv and couple"),
    "beta": (_floats, "0.5", "comma-separated inverse temperatures"),
    "seed": (int, "0", "master seed"),
    "samples": (int, "1000", "recorded samples or draws"),
    "burnin": (int, "1000", "burn-in sweeps"),
    "thin": (int, "10", "sweeps between recorded samples"),
    "sampler": (_sampler, "heatbath", "heatbath or metropolis"),
    "cap": (int, "10", "census cap on the positive support"),
    "plaquette": (parse_plaquette, None, "plaquette x1,x2,x3,x4:i,j"),
    "m": (_ints, "2..6", "path lengths"),
    "M": (_ints, "1,2,3", "vortex sizes for the proposition checks"),
    "budget": (int, str(2 ** 30), "state budget for exact enumeration"),
    "output": (str, "-", "output path, - for stdout"),
    "format": (_fmt, None, "csv or jsonl (fixed per command)"),
}

FORMATS = {"verify": "jsonl", "census": "jsonl", "paths": "csv", "exact": "jsonl", "mcmc": "csv",
           "bounds": "jsonl", "tv": "jsonl", "couple": "jsonl"}


@dataclass
class RunConfig:
    command: str
    values: dict
    source: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def metadata(self) -> dict:
        echo = {}
        for k in KEYS:
            v = self.values.get(k)
            if isinstance(v, (Box, Cell)) or k == "group":
                v = None if v is None else _text(v)
            echo[k] = v
        return {"meta": {"artifact": "abelgauge", "version": __version__, "command": self.command, **echo}}


def _text(v) -> str:
    if isinstance(v, Box):
        return str(v)
    if isinstance(v, Cell):
        s = ",".join(map(str, v.base)) + ":" + ",".join(map(str, v.dirs))
        return s if v.sign > 0 else "-" + s
    return str(v)


def read_config_file(path: str) -> dict[str, tuple[str, int]]:
    raw = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, value = line.partition("=")
            key = key.strip()
            if not eq:
                raise ConfigError(f"{path}:{n}: expected key = value")
            if key not in KEYS:
                raise ConfigError(f"{path}:{n}: unknown key {key!r}")
            raw[key] = (value.strip(), n)
    return raw


def resolve(command: str, file_values: dict, flags: dict, path: str | None = None) -> RunConfig:
    values, source = {}, {}
    for key, (parse, default, _) in KEYS.items():
        if flags.get(key) is not None:
            text, where = flags[key], f"--{key}"
        elif key in file_values:
            text, n = file_values[key]
            where = f"{path}:{n}"
        else:
            text, where = default, "default"
        if text is None:
            values[key] = None
        else:
            try:
                values[key] = parse(text)
            except (ValueError, DomainError) as e:
                raise ConfigError(f"{where}: bad value for {key}: {e}") from None
        source[key] = where
    fmt = values["format"]
    if fmt is not None and fmt != FORMATS[command]:
        raise ConfigError(f"{source['format']}: {command} writes {FORMATS[command]}")
    values["format"] = FORMATS[command]
    if command in ("census", "paths") and source["box"] == "default":
        values["box"] = None  # Z^4, or a window sized to the path length
    for key in ("samples", "budget", "thin"):
        if values[key] < 1:
            raise ConfigError(f"{source[key]}: {key} must be positive")
    if values["burnin"] < 0:
        raise ConfigError(f"{source['burnin']}: burnin must be >= 0")
    return RunConfig(command, values, source)


# ------------------------------------------------------------------ output

class Writer:
    """Collects lines and writes them once at the end."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.lines = []
        meta = json.dumps(cfg.metadata(), separators=(",", ":"))
        self.lines.append(("# " + meta) if cfg["format"] == "csv" else meta)

    def record(self, obj: dict):
        self.lines.append(json.dumps(obj, separators=(",", ":")))

    def row(self, *fields):
        self.lines.append(",".join(_cell(f) for f in fields))

    def flush(self):
        text = "\n".join(self.lines) + "\n"
        if self.cfg["output"] == "-":
            try:
                sys.stdout.write(text)
                sys.stdout.flush()
            except BrokenPipeError:
                pass
        else:
            with open(self.cfg["output"], "w") as fh:
                fh.write(text)


def _cell(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _say(msg: str):
    print(msg, file=sys.stderr)


def _plaquette(cfg: RunConfig, box: Box | None) -> Cell:
    p = cfg["plaquette"]
    if p is not None:
        return p
    if box is None:
        return Cell((0, 0, 0, 0), (0, 1))
    return box.cells(2)[0]


# ------------------------------------------------------------------ commands

def cmd_verify(cfg: RunConfig, out: Writer) -> bool:
    box, G = cfg["box"], cfg["group"]
    rng = np.random.Generator(np.random.Philox(cfg["seed"]))
    ok = True

    def check(name, passed, **detail):
        nonlocal ok
        ok &= bool(passed)
        out.record({"check": name, "passed": bool(passed), **detail})
        _say(f"{'PASS' if passed else 'FAIL'} {name} {detail}")

    n = cfg["samples"]
    dd = bianchi = 0
    for _ in range(n):
        sigma = DifferentialForm.random(box, 1, G, rng)
        omega = exterior_derivative(sigma)
        dd += not exterior_derivative(omega).is_zero()
        bianchi += not is_closed(omega)
    check("d_d_zero", dd == 0, samples=n, violations=dd)
    check("bianchi", bianchi == 0, samples=n, violations=bianchi)

    bad = 0
    cells = 0
    for k in range(box.n + 1):
        for c in box.cells(k):
            cells += 1
            bad += hodge_star(hodge_star(c)) != (c if (k * (box.n - k)) % 2 == 0 else -c)
    check("star_star_sign", bad == 0, cells=cells, violations=bad)

    bad = 0
    for _ in range(n):
        omega = exterior_derivative(DifferentialForm.random(box, 1, G, rng))
        bad += exterior_derivative(anti_derivative(omega)) != omega
    check("anti_derivative_round_trip", bad == 0, samples=n, violations=bad)

    for beta in cfg["beta"]:
        dist = exact_distribution(box, G, beta, cfg["budget"])
        worst = 0.0
        for e in box.cells(1):
            for g in G.nonzero():
                nu = exterior_derivative(DifferentialForm.indicator(box, e, G, g))
                if nu.is_zero():
                    continue
                act = activity(nu, beta)
                worst = max(worst, abs(prob_ratio(dist, nu) - act) / act)
        check("ratio_lemma", worst <= 1e-10, beta=beta, max_rel_error=worst)
    return ok


def cmd_census(cfg: RunConfig, out: Writer) -> bool:
    G = cfg["group"]
    box = cfg["box"]
    p = _plaquette(cfg, box)
    forms = minimal_vortex_census(box, p, cfg["cap"], G)
    sizes = {}
    for f in forms:
        out.record(f.to_record())
        s = f.positive_support
        sizes[s] = sizes.get(s, 0) + 1
    for s in range(1, cfg["cap"] + 1):
        out.record({"positive_support": s, "count": sizes.get(s, 0)})
    by_size = dict(sorted(sizes.items()))
    _say(f"census from {_text(p)} with cap {cfg['cap']}: {len(forms)} closed forms, by size {by_size}")
    return True


def cmd_paths(cfg: RunConfig, out: Writer) -> bool:
    p = _plaquette(cfg, None).positive
    out.row("m", "count", "bound")
    ok = True
    for m in cfg["m"]:
        if m < 2:
            raise DomainError("paths need m >= 2")
        box = cfg["box"] or Box(tuple((x - m, x + m + 1) for x in p.base))
        count = count_optimal_paths(box, p, m)
        bound = 40 * 15 ** (m - 2)
        ok &= count <= bound
        out.row(m, count, bound)
        _say(f"m={m}: {count} optimal paths (bound {bound})")
    return ok


def cmd_exact(cfg: RunConfig, out: Writer) -> bool:
    box, G = cfg["box"], cfg["group"]
    for beta in cfg["beta"]:
        dist = exact_distribution(box, G, beta, cfg["budget"])
        if not dist.materialized:
            raise ResourceError(f"{dist.n_states} states is too many to list", required=dist.n_states,
                                budget=dist.n_states - 1)
        if len(cfg["beta"]) > 1:
            out.record({"beta": beta})
        codes = dist.omega_codes().astype(np.uint8 if G.order <= 256 else np.uint32)
        for row, p in zip(codes, dist.probabilities()):
            out.record({"omega": row.tobytes().hex(), "p": float(p)})
        _say(f"beta={beta}: {dist.n_states} plaquette configurations, Z={dist.Z!r}")
    return True


def cmd_mcmc(cfg: RunConfig, out: Writer) -> bool:
    box, G = cfg["box"], cfg["group"]
    out.row("beta", "sample", "key", "frustrated", "action")
    seeds = derive_seeds(cfg["seed"], len(cfg["beta"]))
    for beta, seed in zip(cfg["beta"], seeds):
        res = run_chain(box, G, beta, seed, cfg["samples"], cfg["burnin"], cfg["thin"], cfg["sampler"])
        for i in range(len(res.keys)):
            out.row(beta, i, int(res.keys[i]), int(res.frustrated[i]), float(res.action[i]))
        _say(f"beta={beta}: mean frustrated plaquettes {res.frustrated.mean():.6g}")
    return True


def _emit(out: Writer, report, **extra) -> bool:
    out.record({**report.to_record(), **extra})
    return report.satisfied or not report.preconditions_met


def cmd_bounds(cfg: RunConfig, out: Writer) -> bool:
    box, G = cfg["box"], cfg["group"]
    ok = True
    tr = lambda g: trace_rho(G, g)
    plaqs = box.cells(2)
    for beta in cfg["beta"]:
        if not 30 * alpha(G, beta) < 1:
            raise PreconditionError(f"beta={beta}: need 30*alpha < 1")
        dist = exact_distribution(box, G, beta, cfg["budget"])
        n_fail = 0
        for i, p1 in enumerate(plaqs):
            for p2 in plaqs[i + 1:]:
                r = theorem11_report(dist, LocalFunction.trace(p1, G), LocalFunction.trace(p2, G))
                good = _emit(out, r, p1=_text(p1), p2=_text(p2))
                n_fail += not good
                r = theorem13_report(dist, p1, p2, tr, tr)
                n_fail += not _emit(out, r, p1=_text(p1), p2=_text(p2))
        for p in plaqs:
            n_fail += not _emit(out, theorem12_report(dist, p, tr), p=_text(p))
        p = _plaquette(cfg, box)
        for M in cfg["M"]:
            n_fail += not _emit(out, proposition31_report(dist, {p, -p}, M), p=_text(p))
        for e in box.cells(1):
            nu = exterior_derivative(DifferentialForm.from_cells(box, 1, G, {e: G.nonzero()[0]}))
            for r in proposition33_reports(dist, nu):
                n_fail += not _emit(out, r, edge=_text_edge(e))
        ok &= n_fail == 0
        _say(f"beta={beta}: {n_fail} bound violations with preconditions met")
    return ok


def _text_edge(e: Cell) -> str:
    return ",".join(map(str, e.base)) + ":" + ",".join(map(str, e.dirs))


def _boxes(cfg: RunConfig) -> tuple[Box, Box]:
    inner = cfg["inner_box"] if cfg["inner_box"] is not None else unit_box()
    return cfg["box"], inner


def cmd_tv(cfg: RunConfig, out: Writer) -> bool:
    B, Bp = _boxes(cfg)
    G = cfg["group"]
    p = cfg["plaquette"] or farthest_plaquette(B, Bp)
    ok = True
    for beta in cfg["beta"]:
        r = theorem14_report(B, Bp, {p, -p}, G, beta, cfg["budget"])
        ok &= _emit(out, r, p=_text(p))
        _say(f"beta={beta}: TV {r.lhs:.6g} vs bound {r.rhs:.6g}")
    return ok


def cmd_couple(cfg: RunConfig, out: Writer) -> bool:
    B, Bp = _boxes(cfg)
    G = cfg["group"]
    ok = True
    seeds = derive_seeds(cfg["seed"], len(cfg["beta"]))
    for beta, seed in zip(cfg["beta"], seeds):
        draws = coupled_sample(B, Bp, G, beta, seed, cfg["samples"], budget=cfg["budget"])
        n_open = 0
        for i in range(cfg["samples"]):
            om, glued = draws.forms(i)
            closed = is_closed(glued)
            n_open += not closed
            out.record({"beta": beta, "draw": i, "omega": json.loads(om.to_json()),
                        "omega_hat": json.loads(glued.to_json()), "closed": closed})
        ok &= n_open == 0
        _say(f"beta={beta}: {cfg['samples']} coupled draws, {n_open} glued forms not closed")
    return ok


HANDLERS = {"verify": cmd_verify, "census": cmd_census, "paths": cmd_paths, "exact": cmd_exact,
            "mcmc": cmd_mcmc, "bounds": cmd_bounds, "tv": cmd_tv, "couple": cmd_couple}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="abelgauge", description="Finite Abelian lattice gauge experiments.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="file of key = value lines")
    for key, (_, default, help_) in KEYS.items():
        ap.add_argument(f"--{key}", dest=key, default=None, help=f"{help_} (default {default})")
    return ap


def run(command: str, cfg: RunConfig) -> int:
    out = Writer(cfg)
    try:
        ok = HANDLERS[command](cfg, out)
    except ResourceError as e:
        _say(f"resource limit: {e}")
        return 3
    except (DomainError, PreconditionError) as e:
        _say(f"invalid config: {e}")
        return 2
    out.flush()
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: getattr(args, k) for k in KEYS}
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve(args.command, file_values, flags, args.config)
    except ConfigError as e:
        _say(f"invalid config: {e}")
        return 2
    except OSError as e:
        _say(f"invalid config: {e}")
        return 2
    return run(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
