#!/usr/bin/env python3
"""
Sample 01: Run Sessions and the Dispatcher

This example demonstrates the run record every command writes:
- Registering the built-in stages with a Dispatcher
- Generating a small dataset through the "gen-data" capability
- Reading state, trajectory entries and artifacts back
- Saving and loading the run file
"""

import sys
import tempfile
from pathlib import Path

# Add src to path for development
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from orlab import Dispatcher, EntryType, RunSession, StageCall
from orlab.stages import default_stages


def main():
    print("=" * 60)
    print("Sample 01: Run Sessions and the Dispatcher")
    print("=" * 60)

    # -------------------------------------------------------------------------
    # Registering Stages
    # -------------------------------------------------------------------------
    print("\n1. Registering Stages")
    print("-" * 40)

    dispatcher = Dispatcher()
    for stage in default_stages():
        dispatcher.register(stage)
    print(f"Capabilities: {dispatcher.get_capabilities()}")

    with tempfile.TemporaryDirectory() as tmpdir:
        out = Path(tmpdir)

        # ---------------------------------------------------------------------
        # Generating Data
        # ---------------------------------------------------------------------
        print("\n2. Generating a U-maze Dataset")
        print("-" * 40)

        session = RunSession()
        config = {
            "env": {"env_id": "gc-pointmaze", "layout": "umaze"},
            "data": {"n_transitions": 2000, "sigma_data": 0.2, "seed": 0},
        }
        result = dispatcher.dispatch_single(StageCall("gen-data", {"config": config, "out": str(out)}), session)
        print(f"Success: {result.success}")
        print(f"Summary: {result.result}")

        # ---------------------------------------------------------------------
        # Inspecting the Session
        # ---------------------------------------------------------------------
        print("\n3. Inspecting the Session")
        print("-" * 40)

        print(f"State 'dataset': {session.get('dataset')}")
        for name in session.list_artifacts():
            print(f"Artifact {name}: sha256 {session.artifact_digest(name)[:16]}...")
        for entry in session.get_trajectory():
            print(f"  [{entry.seq_num}] {entry.entry_type.value} from {entry.source}")

        # ---------------------------------------------------------------------
        # Save and Load
        # ---------------------------------------------------------------------
        print("\n4. Save and Load")
        print("-" * 40)

        path = session.save(out / "run.orlab")
        restored = RunSession.load(path)
        print(f"Restored run {restored.run_id}")
        print(f"Artifacts written: {len(restored.entries(EntryType.ARTIFACT_WRITTEN))}")

    print("\n" + "=" * 60)
    print("Sample complete!")
    print("=" * 60)


if __name__ == "__main__":
    main()
