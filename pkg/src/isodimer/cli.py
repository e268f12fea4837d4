"""Command line interface: ``isodimer <subcommand> ...``.

Exit codes: 0 on success, 1 on a library error, 2 on bad arguments.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from pathlib import Path

from isodimer.dirac import inverse_dirac, path_function
from isodimer.errors import IsodimerError
from isodimer.geometry import (
    RhombusPatch,
    add_diagonals,
    build_patch,
    dual_graph,
    honeycomb_torus_domain,
    square_torus_domain,
    torus_quotient,
)
from isodimer.measures import (
    asymptotic_local_statistic,
    boltzmann_probability,
    local_statistic,
    torus_kasteleyn_set,
    torus_local_statistic,
)
from isodimer.render import render_svg
from isodimer.tilings import (
    enumerate_matchings,
    height1,
    height2,
    load_matching,
    matching_to_tiling,
    sample_mcmc,
    save_matching,
)
from isodimer.traintracks import check_periodic, embed_in_periodic


def _edge_pairs(text: str) -> list[tuple[int, int]]:
    pairs = []
    for item in text.split(","):
        w, sep, b = item.strip().partition(":")
        if not sep:
            raise argparse.ArgumentTypeError(f"edge {item!r} is not of the form W:B")
        try:
            pairs.append((int(w), int(b)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"edge {item!r} does not use integer face ids") from None
    return pairs


def _lattice(text: str) -> tuple[complex, complex]:
    try:
        a, b = text.split(";")
        ax, ay = (float(t) for t in a.split(","))
        bx, by = (float(t) for t in b.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("lattice must look like 'AX,AY;BX,BY'") from None
    return complex(ax, ay), complex(bx, by)


def _grid(text: str) -> tuple[int, int]:
    try:
        a, b = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("copy grid must look like '3x3'") from None
    if a < 1 or b < 1:
        raise argparse.ArgumentTypeError("copy grid sizes must be positive")
    return a, b


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError("value must be at least 1")
    return v


def _lattice_json(lattice) -> list[list[float]]:
    return [[t.real, t.imag] for t in lattice]


def _read_lattice(path: str):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None
    lat = data.get("lattice") if isinstance(data, dict) else None
    if lat is None:
        return None
    return complex(*lat[0]), complex(*lat[1])


def _emit(args, payload: dict, text: str) -> None:
    print(json.dumps(payload, sort_keys=True) if args.json else text)


def _load_dual(path: str):
    return dual_graph(add_diagonals(RhombusPatch.load(path)))


def _edges_of(dual, pairs):
    return [dual.edge_by_faces(w, b) for w, b in pairs]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> None:
    patch = build_patch(args.region)
    patch.save(args.output)
    _emit(args, {"output": args.output, "rhombi": len(patch.rhombi), "vertices": len(patch.positions)},
          f"wrote {args.output}: {len(patch.rhombi)} rhombi, {len(patch.positions)} vertices")


def cmd_enumerate(args) -> None:
    dual = _load_dual(args.patch)
    ms = enumerate_matchings(dual)
    payload = {"count": len(ms)}
    lines = [f"{len(ms)} quadri-tilings"]
    if not args.count_only:
        payload["matchings"] = [[list(p) for p in m.face_pairs()] for m in ms]
        for m in ms:
            kinds = Counter(t.kind for t in matching_to_tiling(m))
            lines.append(" ".join(f"{a}:{b}" for a, b in m.face_pairs()) + f"  ({kinds['leg']} leg, {kinds['hypotenuse']} hyp)")
    _emit(args, payload, "\n".join(lines))


def cmd_sample(args) -> None:
    tri = add_diagonals(RhombusPatch.load(args.patch))
    m = sample_mcmc(tri, args.steps, args.seed)
    if args.output:
        save_matching(m, args.output)
    pairs = [list(p) for p in m.face_pairs()]
    _emit(args, {"matched_edges": pairs, "steps": args.steps, "seed": args.seed},
          " ".join(f"{a}:{b}" for a, b in pairs))


def cmd_prob(args) -> None:
    if args.method == "torus":
        if args.preset:
            domain, lattice = square_torus_domain() if args.preset == "square" else honeycomb_torus_domain()
        else:
            lattice = args.lattice or (_read_lattice(args.patch) if args.patch else None)
            if not args.patch or lattice is None:
                raise IsodimerError("torus method needs --preset, or --patch with a lattice")
            domain = add_diagonals(RhombusPatch.load(args.patch))
        torus = torus_quotient(domain, lattice, args.n)
        value = complex(torus_local_statistic(torus_kasteleyn_set(torus), _edges_of(torus.dual, args.edges)))
    else:
        if not args.patch:
            raise IsodimerError("--patch is required")
        dual = _load_dual(args.patch)
        q = _edges_of(dual, args.edges)
        if args.method == "exact":
            value = complex(local_statistic(dual, q))
        elif args.method == "asymptotic":
            value = complex(asymptotic_local_statistic(dual, q))
        else:
            value = complex(boltzmann_probability(dual, q, method=args.method))
    _emit(args, {"method": args.method, "re": value.real, "im": value.imag},
          f"{value.real:.15g}" + (f" {value.imag:+.3g}i" if abs(value.imag) > 1e-12 else ""))


def cmd_invdirac(args) -> None:
    dual = _load_dual(args.patch)
    value = inverse_dirac(dual, args.black, args.white, method=args.method)
    poles = [{"angle": a, "mult": m} for a, m in path_function(dual, args.white, args.black).poles]
    _emit(args, {"re": value.real, "im": value.imag, "poles": poles},
          f"{value.real:.15g} {value.imag:+.15g}i, {len(poles)} pole(s)")


def cmd_embed(args) -> None:
    patch = RhombusPatch.load(args.patch)
    ambient = RhombusPatch.load(args.ambient) if args.ambient else None
    domain, lattice = embed_in_periodic(patch, ambient)
    report = check_periodic(domain, lattice)
    data = domain.to_dict()
    data["lattice"] = _lattice_json(lattice)
    Path(args.output).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")
    if args.svg:
        Path(args.svg).write_text(render_svg(domain, lattice=lattice, copies=(3, 3)), encoding="utf-8")
    header = {"lattice": _lattice_json(lattice), "rhombi": len(domain.rhombi), "output": args.output,
              "periodic_ok": bool(report["ok"])}
    _emit(args, header, json.dumps({"lattice": header["lattice"]}))


def cmd_torus_z(args) -> None:
    if args.preset:
        domain, lattice = square_torus_domain() if args.preset == "square" else honeycomb_torus_domain()
    else:
        if not args.patch:
            raise IsodimerError("--patch or --preset is required")
        domain = add_diagonals(RhombusPatch.load(args.patch))
        lattice = args.lattice or _read_lattice(args.patch)
        if lattice is None:
            raise IsodimerError("no lattice given and none stored in the patch file")
    ks = torus_kasteleyn_set(torus_quotient(domain, lattice, args.n))
    _emit(args, {"Z": ks.partition, "dets": ks.dets}, f"Z = {ks.partition:.15g}")


def cmd_render(args) -> None:
    patch = RhombusPatch.load(args.patch)
    matching = load_matching(args.matching) if args.matching else None
    heights = None
    if args.heights and not patch.is_simply_connected():
        raise IsodimerError("heights are only defined on simply connected patches")
    if args.heights == "h1":
        if matching is None:
            raise IsodimerError("--heights h1 needs --matching")
        heights = height1(matching).values
    elif args.heights == "h2":
        heights = height2(patch).values
    lattice = None
    copies = (1, 1)
    if args.copies is not None:
        lattice = args.periods or _read_lattice(args.patch)
        if lattice is None:
            raise IsodimerError("--lattice needs --periods or a patch file with a stored lattice")
        copies = args.copies
    svg = render_svg(patch, matching=matching, heights=heights, tracks=args.tracks, lattice=lattice, copies=copies)
    Path(args.output).write_text(svg, encoding="utf-8")
    _emit(args, {"output": args.output, "bytes": len(svg.encode())}, f"wrote {args.output}")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isodimer", description="Critical dimers on isoradial rhombus patches.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--json", action="store_true", help="print machine-readable output")
        sp.set_defaults(func=func)
        return sp

    sp = add("gen", cmd_gen, "write a patch file")
    sp.add_argument("--region", required=True, help="rhombus:THETA, hex:A,B,C, grid:M,N or file:PATH")
    sp.add_argument("-o", "--output", required=True)

    sp = add("enumerate", cmd_enumerate, "list all quadri-tilings of a patch")
    sp.add_argument("--patch", required=True)
    sp.add_argument("--count-only", action="store_true")

    sp = add("sample", cmd_sample, "run the Markov chain on quadri-tilings")
    sp.add_argument("--patch", required=True)
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("-o", "--output", help="matching file to write")

    sp = add("prob", cmd_prob, "probability of a set of dimer edges")
    sp.add_argument("--patch")
    sp.add_argument("--edges", type=_edge_pairs, required=True, help="W:B face id pairs, comma separated")
    sp.add_argument("--method", choices=["exact", "asymptotic", "torus", "determinant", "enumerate"], default="exact")
    sp.add_argument("--lattice", type=_lattice, help="torus periods 'AX,AY;BX,BY'")
    sp.add_argument("--preset", choices=["square", "honeycomb"], help="built-in torus domain")
    sp.add_argument("--n", type=_positive, default=1, help="torus size in fundamental domains")

    sp = add("invdirac", cmd_invdirac, "inverse Dirac operator entry")
    sp.add_argument("--patch", required=True)
    sp.add_argument("--black", type=int, required=True)
    sp.add_argument("--white", type=int, required=True)
    sp.add_argument("--method", choices=["residues", "quadrature"], default="residues")

    sp = add("embed-periodic", cmd_embed, "embed a patch in a periodic rhombus tiling")
    sp.add_argument("--patch", required=True)
    sp.add_argument("--ambient", help="patch containing it, used to make it track-convex")
    sp.add_argument("-o", "--output", required=True, help="fundamental domain file (with lattice)")
    sp.add_argument("--svg", help="also draw 3x3 copies of the domain")

    sp = add("torus-z", cmd_torus_z, "torus partition function")
    sp.add_argument("--patch")
    sp.add_argument("--lattice", type=_lattice)
    sp.add_argument("--preset", choices=["square", "honeycomb"])
    sp.add_argument("--n", type=_positive, default=1)

    sp = add("render", cmd_render, "draw an SVG")
    sp.add_argument("--patch", required=True)
    sp.add_argument("--matching")
    sp.add_argument("--heights", choices=["h1", "h2"])
    sp.add_argument("--tracks", action="store_true")
    sp.add_argument("--lattice", dest="copies", type=_grid, help="draw NxM lattice translates, e.g. 3x3")
    sp.add_argument("--periods", type=_lattice)
    sp.add_argument("-o", "--output", required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (IsodimerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
