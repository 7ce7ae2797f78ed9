"""
The full evaluation pipeline at desk scale
==========================================

Simulates a 19 + 20 session corpus with the calibrated operator profiles, then
runs the analysis exactly as the evaluation prescribes: Shapiro-Wilk per
group, one-way ANOVA where both groups look normal, Mann-Whitney-Wilcoxon
otherwise, plus the weighted error table and improvement percentages.

Writes logs, metrics.csv, report.md/csv and SVG histograms under demo_out/.
"""
import pathlib

from replicasim.cli import main

out = pathlib.Path("demo_out")
rc = main(["simulate", "--seed", "2024", "--out", str(out)])
assert rc == 0

rc = main(["analyze", str(out / "metrics.csv"), "--out", str(out), "--histograms"])
assert rc == 0

print("\nfiles written:")
for path in sorted(out.iterdir()):
    print("  ", path)
