"""Reader for the EUC_2D subset of TSPLIB / CVRPLIB files."""
from __future__ import annotations

import json
from importlib import resources

import numpy as np

from ..core import Instance, ProblemKind

SECTIONS = {"NODE_COORD_SECTION", "DEMAND_SECTION", "DEPOT_SECTION"}


class TSPLIBError(ValueError):
    pass


def parse_tsplib_text(text: str, name_hint: str = "") -> Instance:
    spec = {}
    coords, demands, depots = {}, {}, []
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line == "EOF":
            break
        head = line.split(":", 1)[0].strip() if ":" in line else line.split()[0]
        if head in SECTIONS and ":" not in line:
            section = head
            continue
        if ":" in line and not line[0].isdigit() and not line[0] == "-":
            key, value = (s.strip() for s in line.split(":", 1))
            spec[key] = value
            section = None
            continue
        parts = line.split()
        try:
            if section == "NODE_COORD_SECTION":
                if len(parts) != 3:
                    raise ValueError
                coords[int(parts[0])] = (float(parts[1]), float(parts[2]))
            elif section == "DEMAND_SECTION":
                if len(parts) != 2:
                    raise ValueError
                demands[int(parts[0])] = int(parts[1])
            elif section == "DEPOT_SECTION":
                ids = [int(p) for p in parts]
                depots.extend(i for i in ids if i != -1)
                if -1 in ids:
                    section = None
            else:
                raise TSPLIBError(f"line {lineno}: unexpected content {line!r}")
        except ValueError:
            raise TSPLIBError(f"line {lineno}: malformed {section} entry {line!r}") from None

    kind_raw = spec.get("TYPE", "")
    if kind_raw not in ("TSP", "CVRP"):
        raise TSPLIBError(f"unsupported problem type {kind_raw!r}")
    ewt = spec.get("EDGE_WEIGHT_TYPE", "")
    if ewt != "EUC_2D":
        raise TSPLIBError(f"unsupported edge weight type {ewt!r}")
    try:
        dim = int(spec["DIMENSION"])
    except (KeyError, ValueError):
        raise TSPLIBError("missing or invalid DIMENSION") from None
    if len(coords) != dim or sorted(coords) != list(range(1, dim + 1)):
        raise TSPLIBError(f"DIMENSION mismatch: header says {dim}, found {len(coords)} coordinates")

    raw = np.array([coords[i] for i in range(1, dim + 1)])
    lo = raw.min(axis=0)
    extent = float((raw.max(axis=0) - lo).max()) or 1.0
    unit = np.clip((raw - lo) / extent, 0.0, 1.0)
    name = spec.get("NAME", name_hint)
    common = dict(id=name, metric="euc_2d", coord_scale=extent, coord_offset=(float(lo[0]), float(lo[1])))

    if kind_raw == "TSP":
        return Instance(ProblemKind.TSP, unit, **common)

    if "CAPACITY" not in spec:
        raise TSPLIBError("CVRP file without CAPACITY")
    if len(demands) != dim:
        raise TSPLIBError(f"DIMENSION mismatch: header says {dim}, found {len(demands)} demands")
    if len(depots) != 1:
        raise TSPLIBError("exactly one depot is supported")
    depot = depots[0]
    customers = [i for i in range(1, dim + 1) if i != depot]
    idx = np.array(customers) - 1
    return Instance(
        ProblemKind.CVRP,
        unit[idx],
        demands=[demands[i] for i in customers],
        capacity=int(spec["CAPACITY"]),
        depot=unit[depot - 1],
        **common,
    )


def parse_tsplib(path) -> Instance:
    with open(path) as fh:
        return parse_tsplib_text(fh.read(), name_hint=str(path))


def best_known() -> dict:
    """Best-known objective values for the supported library instances."""
    with resources.files("lifelong_vrp.data").joinpath("best_known.json").open() as fh:
        return json.load(fh)["instances"]
