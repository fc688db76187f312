#!/usr/bin/env python3
"""
Sample 03: A Small Data-Scaling Matrix

This example fills a 2x2 matrix per extraction method on the U-maze and
writes matrices.csv, aggregates.csv and one SVG heatmap per method.
Set ORLAB_WORKERS to run (value size, seed) jobs in parallel.
"""

import sys
import tempfile
from pathlib import Path

# Add src to path for development
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from orlab.harness import GridConfig, build_matrix, emit_outputs


def main():
    print("=" * 60)
    print("Sample 03: Data-Scaling Matrix")
    print("=" * 60)

    config = GridConfig.from_dict({
        "env": {"env_id": "gc-pointmaze", "layout": "umaze", "eval_start_region": "all"},
        "data": {"n_transitions": 4000, "sigma_data": 0.2},
        "value": {"objective": "iql", "steps": 500},
        "extraction": {"steps": 500, "eval_every": 250},
        "eval_every": 250,
        "eval_episodes": 10,
        "grid": {
            "value_sizes": [1000, 4000],
            "policy_sizes": [1000, 4000],
            "methods": ["awr", "ddpg+bc"],
            "seeds": [0, 1],
        },
    })
    result = build_matrix(config)

    for matrix in result.matrices:
        gradient = matrix.gradient()
        print(f"\n{matrix.name}: aggregate {matrix.aggregate():.3f}, gradient {gradient.direction.value}")
        print(matrix.scores())

    with tempfile.TemporaryDirectory() as tmpdir:
        for path in emit_outputs(tmpdir, result.matrices):
            print(f"wrote {Path(path).name}")

    print("\n" + "=" * 60)
    print("Sample complete!")
    print("=" * 60)


if __name__ == "__main__":
    main()
