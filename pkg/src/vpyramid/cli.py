"""Command-line entry point: cover, build, verify, energy, accordion, plot.

Exit codes: 0 success, 2 input error, 3 mathematical precondition failure,
4 internal invariant violation.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .geometry import PreconditionError, format_scalar

EXIT_OK, EXIT_INPUT, EXIT_PRECONDITION, EXIT_INTERNAL = 0, 2, 3, 4


class InvariantViolation(RuntimeError):
    pass


@dataclass
class RunConfig:
    command: str
    domain: str | None = None
    depth: int = 6
    steps: int = 6
    alpha: float | None = None
    delta: list = field(default_factory=lambda: [0.0])
    h: list = field(default_factory=lambda: [0.0])
    out: Path = Path(".")
    seed: int = 0
    threads: int = 1
    certify_tail: bool = False
    frames: int = 5
    samples: int = 10000
    kind: str = "solution"
    cells: str | None = None

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


def _floats(text: str) -> list[float]:
    try:
        return [float(Fraction(v.strip())) for v in text.split(",") if v.strip()]
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc


def _load_spec(cfg: RunConfig):
    from .covering import parse_domain_spec

    if cfg.domain is None:
        raise ValueError("--domain is required")
    text = cfg.domain if cfg.domain.lstrip().startswith("{") else Path(cfg.domain).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid domain spec: {exc}") from exc
    if isinstance(data, dict) and cfg.alpha is not None:
        data["alpha"] = str(cfg.alpha)
    return parse_domain_spec(data)


def _solution(cfg: RunConfig):
    from .solution import build_solution

    return build_solution(_load_spec(cfg).covering(cfg.steps), cfg.depth)


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _num(x) -> str:
    return format_scalar(x) if not isinstance(x, float) else f"{x:.12g}"


def cmd_cover(cfg: RunConfig) -> int:
    cov = _load_spec(cfg).covering(cfg.depth)
    path = _write(cfg.out, "covering.json", cov.to_json())
    print(f"{len(cov)} squares, sum of sides {_num(cov.sum_of_sides())}")
    for level, n in cov.counts_by_level().items():
        print(f"  level {level}: {n}")
    print(f"residual area {cov.residual_area():.12g}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_build(cfg: RunConfig) -> int:
    from .io import dumps_cells

    sol = _solution(cfg)
    path = _write(cfg.out, "cells.txt", dumps_cells(sol.cell_map(exact=True)))
    print(f"{sol.n_squares} squares, {sol.n_cells} cells, singular set length {sol.sigma.length():.12g}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    from .solution import verify_solution

    sol = _solution(cfg)
    deltas = [d for d in cfg.delta if d > 0] or [0.1]
    rep = verify_solution(sol, cfg.samples, cfg.seed, deltas)
    text = "\n".join(rep.lines()) + "\n"
    _write(cfg.out, "verify.txt", text)
    sys.stdout.write(text)
    if not rep.passed:
        raise InvariantViolation("verification failed")
    return EXIT_OK


def cmd_energy(cfg: RunConfig) -> int:
    from . import energy

    alpha = 1.0 if cfg.alpha is None else cfg.alpha
    if cfg.certify_tail and alpha <= 0:
        raise PreconditionError("divergent tail: alpha must be positive for a tail certificate")
    spec = _load_spec(cfg)
    from .solution import build_solution

    cov = spec.covering(cfg.steps)
    sol = build_solution(cov, cfg.depth)
    rep = energy.energy_report(sol, alpha, cfg.delta, cfg.h, cfg.threads)
    if cfg.certify_tail:
        if rep.tail_bound is None:
            raise PreconditionError("no tail certificate for this domain (only squares, rectangles "
                                    "and alpha-compatible pieces are certified)")
    rows = energy.depth_sweep(lambda K: build_solution(cov, K), alpha, range(max(1, cfg.depth - 4), cfg.depth + 1),
                              cfg.delta[0], cfg.h[0], cfg.threads)
    p1 = _write(cfg.out, "energy.json", rep.to_json())
    p2 = _write(cfg.out, "energy.csv", energy.sweep_csv(rows))
    for e in rep.entries:
        print(f"delta={e.delta:.12g} h={e.h:.12g} F1={e.F1:.12g} F2_total={e.F2_total:.12g}")
    print("tail bound " + ("none" if rep.tail_bound is None else f"{rep.tail_bound:.12g}"))
    print(f"wrote {p1} and {p2}")
    return EXIT_OK


def cmd_accordion(cfg: RunConfig) -> int:
    from .accordion import AccordionSpec, axis_values, build_accordion, frame_boundary_length, jump_length
    from .io import dumps_cells
    from .svg import map_svg

    spec = AccordionSpec.harmonic(cfg.frames)
    pm = build_accordion(spec)
    _write(cfg.out, "accordion_cells.txt", dumps_cells(pm))
    _write(cfg.out, "accordion.svg", map_svg(pm))
    for j, (a, b) in sorted(axis_values(spec).items()):
        print(f"u(s_{j}, 0) = ({_num(a)}, {_num(b)})")
    print(f"frame boundary length {float(frame_boundary_length(spec.s, spec.frames)):.12g}")
    print(f"jump length {jump_length(pm):.12g}")
    return EXIT_OK


def cmd_plot(cfg: RunConfig) -> int:
    from . import svg

    if cfg.cells:
        from .io import load_cells

        text = svg.map_svg(load_cells(cfg.cells))
    elif cfg.kind == "pyramid":
        from .pyramid import pyramid_cells

        text = svg.map_svg(pyramid_cells(cfg.depth))
    elif cfg.kind in ("even", "odd"):
        from .pyramid import pyramid_cells, square_cells

        # the pair Q[k, j], Q[k, j + 1] with j even or odd
        k = max(cfg.depth, 2)
        j = 0 if cfg.kind == "even" else 1
        pm = pyramid_cells(k + 1)
        idx = np.concatenate([square_cells(k, j, k + 1), square_cells(k, j + 1, k + 1)])
        text = svg.render_svg(list(pm.float_vertices()[idx]), pm.labels[idx])
    elif cfg.kind == "covering":
        text = svg.covering_svg(_load_spec(cfg).covering(cfg.steps))
    elif cfg.kind == "accordion":
        from .accordion import AccordionSpec, build_accordion

        text = svg.map_svg(build_accordion(AccordionSpec.harmonic(cfg.frames)))
    else:
        sol = _solution(cfg)
        text = svg.map_svg(sol.cell_map(), sol.sigma.all_segments())
    path = _write(cfg.out, f"{cfg.kind}.svg", text)
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"cover": cmd_cover, "build": cmd_build, "verify": cmd_verify,
            "energy": cmd_energy, "accordion": cmd_accordion, "plot": cmd_plot}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vpyramid", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--domain", help="domain-spec JSON file (or inline JSON)")
    p.add_argument("--depth", type=int, default=6,
                   help="pyramid truncation depth (cover: triangle steps or Vitali levels)")
    p.add_argument("--steps", type=int, default=6, help="covering steps/levels for build, verify, energy, plot")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--delta", type=_floats, default=[0.0], help="comma-separated list")
    p.add_argument("--h", type=_floats, default=[0.0], help="comma-separated list")
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--certify-tail", action="store_true")
    p.add_argument("--frames", type=int, default=5, help="accordion double frames")
    p.add_argument("--samples", type=int, default=10000, help="verify: sampled points")
    p.add_argument("--kind", default="solution",
                   choices=["solution", "pyramid", "even", "odd", "covering", "accordion"], help="plot subject")
    p.add_argument("--cells", help="plot: cell file written by build")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        cfg = RunConfig(args.command, args.domain, args.depth, args.steps, args.alpha, args.delta, args.h,
                        args.out, args.seed, args.threads, args.certify_tail, args.frames, args.samples,
                        args.kind, args.cells)
        return COMMANDS[cfg.command](cfg)
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
