#!/usr/bin/env python3
"""Convert perfhom .grid dumps to legacy VTK structured points (cell data)."""

import argparse
import sys
from pathlib import Path


def read_grid(path):
    lines = Path(path).read_text().split("\n")
    if lines[0] != "# perfhom grid":
        raise ValueError(f"{path}: not a perfhom grid dump")
    head = {}
    for line in lines[1:6]:
        key, *vals = line.split()
        head[key] = vals
    nx, ny = int(head["nx"][0]), int(head["ny"][0])
    dx, dy = float(head["dx"][0]), float(head["dy"][0])
    origin = [float(v) for v in head["origin"]]
    values = [float(v) for line in lines[6:] for v in line.split()]
    if len(values) != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {len(values)}")
    return nx, ny, dx, dy, origin, values


def write_vtk(path, name, nx, ny, dx, dy, origin, values):
    with open(path, "w") as out:
        out.write("# vtk DataFile Version 3.0\n")
        out.write(f"{name}\nASCII\nDATASET STRUCTURED_POINTS\n")
        out.write(f"DIMENSIONS {nx + 1} {ny + 1} 1\n")
        out.write(f"ORIGIN {origin[0]} {origin[1]} 0\n")
        out.write(f"SPACING {dx!r} {dy!r} 1\n")
        out.write(f"CELL_DATA {nx * ny}\nSCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for v in values:
            out.write(f"{v!r}\n")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("grids", nargs="+", help=".grid files")
    parser.add_argument("--outdir", help="directory for the .vtk files (default: next to the input)")
    args = parser.parse_args(argv)
    for g in args.grids:
        src = Path(g)
        dst = (Path(args.outdir) if args.outdir else src.parent) / (src.stem + ".vtk")
        write_vtk(dst, src.stem, *read_grid(src))
    return 0


if __name__ == "__main__":
    sys.exit(main())
