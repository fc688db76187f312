#!/usr/bin/env python3
"""
Sample 02: Decoupled Value Learning, Extraction and Test-Time Improvement

This example runs the whole pipeline in-process on the U-maze:
- Train and freeze an IQL value function
- Extract a DDPG+BC policy from it
- Evaluate vanilla and OPEX actions on the same start states
- Measure the policy's action MSE against the exact oracle
"""

import sys
from pathlib import Path

# Add src to path for development
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from orlab.data import generate_dataset
from orlab.diagnostics import mse_report
from orlab.envs import make_env, solve_oracle
from orlab.policy import ExtractionConfig, ExtractionMethod, extract
from orlab.testtime import OpexConfig, evaluate_with_method
from orlab.value import ValueConfig, ValueObjective, train_value


def main():
    print("=" * 60)
    print("Sample 02: Decoupled Pipeline")
    print("=" * 60)

    env = make_env("gc-pointmaze", "umaze")
    dataset = generate_dataset(env, None, 5000, 0.2, seed=0)
    view = dataset.view()
    print(f"\nDataset: {dataset.n_trajectories} trajectories, {dataset.n_transitions} transitions")

    # -------------------------------------------------------------------------
    # Value Learning
    # -------------------------------------------------------------------------
    print("\n1. Training IQL")
    print("-" * 40)

    value = train_value(view, ValueConfig(objective=ValueObjective.IQL, steps=2000), seed=0)
    print(f"Value digest: {value.digest[:12]}")

    # -------------------------------------------------------------------------
    # Policy Extraction
    # -------------------------------------------------------------------------
    print("\n2. Extracting DDPG+BC")
    print("-" * 40)

    config = ExtractionConfig(method=ExtractionMethod.DDPG_BC, alpha=1.0, steps=2000, eval_every=500)
    artifact = extract(config, value, view, seed=0)
    for row in artifact.curves:
        print(f"  step {int(row['step']):5d}: train {row['train_loss']:.4f}  val {row.get('val_loss', float('nan')):.4f}")

    # -------------------------------------------------------------------------
    # Evaluation
    # -------------------------------------------------------------------------
    print("\n3. Vanilla vs OPEX")
    print("-" * 40)

    vanilla = evaluate_with_method(env, artifact, "vanilla", episodes=20, seed=1)
    opex = evaluate_with_method(env, artifact, "opex", episodes=20, seed=1, opex=OpexConfig(beta=0.3))
    print(f"Vanilla score: {vanilla.score:.3f} ({vanilla.best_mode})")
    print(f"OPEX score:    {opex.score:.3f} ({opex.best_mode})")

    # -------------------------------------------------------------------------
    # Oracle MSE
    # -------------------------------------------------------------------------
    print("\n4. Oracle MSE")
    print("-" * 40)

    report = mse_report(artifact, solve_oracle(env), view, env=env, episodes=20, seed=2)
    print(f"train {report.train_mse:.4f}  val {report.val_mse:.4f}  eval {report.eval_mse:.4f}")

    print("\n" + "=" * 60)
    print("Sample complete!")
    print("=" * 60)


if __name__ == "__main__":
    main()
