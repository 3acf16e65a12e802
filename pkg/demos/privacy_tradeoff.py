"""Clipping and Gaussian noise on the aggregated update.

Each client's update is clipped to norm C and noise of standard deviation
sigma is added to the averaged update. Larger sigma costs accuracy. The
report gives the mechanism parameters only: no (epsilon, delta) accounting
is attempted.

    python3 demos/privacy_tradeoff.py
"""

from __future__ import annotations

from metafed import run_experiment
from metafed.config import PrivacyConfig
from metafed.harness import preset_config

base = preset_config("standard-fl", "moderate", seed=3, family="shifted-linear-regression")

print(f"{'sigma':>7} {'final loss':>11} {'accuracy':>9} {'noise multiplier':>17}")
for sigma in (0.0, 0.001, 0.01, 0.05):
    cfg = base.replace(privacy=PrivacyConfig(enabled=True, clip_norm=1.0, noise_sigma=sigma))
    result = run_experiment(cfg)
    rep = result.privacy_report
    print(f"{sigma:7.3f} {result.records[-1].global_loss:11.4f} "
          f"{result.final['accuracy']:9.3f} {rep.noise_multiplier:17.3f}")

print(f"\nreport label: {rep.label}")
