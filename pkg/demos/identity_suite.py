#!/usr/bin/env python3
"""Run the analytic identity checks through the CLI and show the
reports.

Writes a small config file, runs the ``suite:identities`` experiment
exactly as the console command would, and prints each produced report.
Artifacts (reports, CSV tables, the manifest) land in demos_out/.

Usage:  python3 demos/identity_suite.py
"""

import tempfile
from pathlib import Path

from paulipml import cli

CONFIG = """\
[experiment]
kind = suite:identities
seed = 0

[domain]
half_length = 1.0
delta = 0.3

[profile]
sigma0 = 4.0
start = 0.5

[freq]
tau = 50, 50+20j
"""

out = Path("demos_out")
with tempfile.NamedTemporaryFile("w", suffix=".cfg", delete=False) as fh:
    fh.write(CONFIG)
    cfg_path = fh.name

code = cli.main([cfg_path, "--out", str(out)])
print(f"\nexit code: {code}\n")

for report in sorted(out.glob("report_*.txt")):
    print("=" * 60)
    print(report.read_text())

print("=" * 60)
print("manifest:")
print((out / "manifest.txt").read_text())
