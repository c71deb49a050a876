"""Type I-V verdict table for the reference operators (right shift and flux
on the plane, a prescribed-index unitary, a canonical SAU and the long-range
ray hopping on a star) together with the implication audit."""

import argparse
import json
from pathlib import Path

from quasi2d.experiments import ExperimentConfig, run_experiment

LADDERS = {
    "R1": {"operator": "R1", "sizes": [8, 12, 16]},
    "flux": {"operator": "laughlin-flux", "sizes": [8, 12, 16]},
    "prescribed": {"operator": "prescribed", "s": [1, 1, -2], "sizes": [64, 128, 256]},
    "canonical-sau": {"operator": "canonical-sau", "sizes": [32, 64, 128]},
    "ray-hopping": {"operator": "ray-hopping", "sizes": [32, 64, 128]},
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="quasi2d-out/locality_table.json")
    args = ap.parse_args()
    table = {}
    print(f"{'operator':15s} " + " ".join(f"{t:>13s}" for t in ("I", "II", "III", "IV", "V")) + "  audit")
    for name, params in LADDERS.items():
        outcome = run_experiment(ExperimentConfig.from_dict({"kind": "locality-audit", "params": params}))
        summary = outcome.results["summary"]
        bad = [a for a in outcome.results["audit"] if a["status"] == "violation"]
        table[name] = {"summary": summary, "violations": bad}
        print(f"{name:15s} " + " ".join(f"{summary[t]:>13s}" for t in ("I", "II", "III", "IV", "V"))
              + f"  {'ok' if not bad else 'VIOLATION'}")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(table, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
