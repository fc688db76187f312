"""
Test suite for Orlab.

Tests are organized by module:

- test_grad.py: Autodiff engine, layers, optimizer and checkpoints
- test_envs.py: Environments, scripted experts and oracles
- test_data.py: Datasets, splits, samplers, goal relabeling, ORLD files
- test_value.py: SARSA, IQL and CRL value learning, tabular fixed points
- test_policy.py: AWR, DDPG+BC and SfBC extraction
- test_testtime.py: OPEX, TTT and evaluation methods
- test_diagnostics.py: Oracle MSE, overfitting gap, action spread
- test_featurize.py: Observation featurizers
- test_types.py: Shared types and error codes
- test_session.py: Run session state, trajectory, artifacts, persistence
- test_dispatcher.py: Stage registration and dispatch
- test_harness.py: Config layer, matrices, CSV and SVG output
- test_experiments.py: Experiment drivers and AWR pathologies (integration, slow)
- test_cli.py: Command line pipeline and exit codes

Run tests with: pytest
Skip the slow drivers: pytest -m "not slow"
"""
