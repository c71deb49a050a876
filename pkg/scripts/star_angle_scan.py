"""Worst graph/Euclidean distance ratio on a three-leg star as the smallest
leg angle shrinks, next to the sqrt(1 + 2/|sin theta|) bound and the sharp
1/sin(theta/2) constant.  Writes a CSV and an SVG."""

import argparse
import csv
import math
from pathlib import Path

from quasi2d.lattice import StarGraph, build_site_map
from quasi2d.plots import line_plot
from quasi2d.star import StarEmbedding, distance_comparability, distance_bound, sharp_constant


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="quasi2d-out/star_angle_scan")
    ap.add_argument("--leg-length", type=int, default=32)
    ap.add_argument("--angles", type=float, nargs="+", default=[5, 15, 30, 45, 60, 68, 75, 90, 105, 120])
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sm = build_site_map(StarGraph(3, args.leg_length))
    rows = []
    for deg in args.angles:
        # legs at 0, deg and 180 + deg / 2 keep the other two angles wide
        emb = StarEmbedding.from_degrees([0.0, deg, 180.0 + deg / 2])
        rep = distance_comparability(sm, emb)
        theta = math.radians(deg)
        rows.append({"theta_min_deg": deg, "max_ratio": rep["max_ratio"], "bound": distance_bound(theta),
                     "sharp": sharp_constant(theta), "bound_holds": rep["pass"]})
        print(f"{deg:6.1f} deg  ratio {rep['max_ratio']:.4f}  bound {distance_bound(theta):.4f}  "
              f"{'ok' if rep['pass'] else 'VIOLATED'}")
    with open(out / "scan.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    series = {key: [(r["theta_min_deg"], r[key]) for r in rows] for key in ("max_ratio", "bound", "sharp")}
    svg = line_plot(series, "distance ratio vs smallest leg angle", "theta_min (deg)", "ratio", False, True)
    (out / "scan.svg").write_text(svg)


if __name__ == "__main__":
    main()
