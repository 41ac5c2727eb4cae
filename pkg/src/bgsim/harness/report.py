"""Reports: one verdict per requested check, counts and file references.

``report.csv`` holds only deterministic content, so two runs with the
same configuration and seed produce identical files.  Wall-clock timings
go to ``timing.csv`` next to it, and ``report.png`` plots the report's
series (states per depth for explorations, completed invocations per
step for runs).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

HOLDS, REFUTED, BOUND = "holds", "refuted", "bound"
EXIT_CODES = {HOLDS: 0, REFUTED: 2, BOUND: 3}


@dataclass
class Report:
    scenario: str
    mode: str
    verdicts: dict = field(default_factory=dict)  # check -> (verdict, detail)
    counts: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)  # role -> file name
    counterexample: Optional[str] = None
    timing: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)  # name -> [(x, y), ...]

    def verdict(self, check, verdict, detail=""):
        self.verdicts[check] = (verdict, detail)

    @property
    def status(self):
        vs = [v for v, _ in self.verdicts.values()]
        if REFUTED in vs:
            return REFUTED
        if BOUND in vs:
            return BOUND
        return HOLDS

    @property
    def exit_code(self):
        return EXIT_CODES[self.status]

    def rows(self):
        yield ("scenario", self.scenario, self.mode, "")
        yield ("status", "overall", self.status, "")
        for check, (v, detail) in self.verdicts.items():
            yield ("check", check, v, detail)
        for k, v in self.counts.items():
            yield ("count", k, v, "")
        for role, name in self.files.items():
            yield ("file", role, name, "")
        if self.counterexample:
            yield ("counterexample", "file", self.counterexample, "")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("section", "name", "value", "detail"))
        w.writerows(self.rows())
        return buf.getvalue()

    def timing_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("phase", "seconds"))
        for k, v in self.timing.items():
            w.writerow((k, f"{v:.4f}"))
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"{self.mode} {self.scenario}: {self.status}"]
        lines += [f"  {c}: {v}{' (' + d + ')' if d else ''}"
                  for c, (v, d) in self.verdicts.items()]
        lines += [f"  {k} = {v}" for k, v in self.counts.items()]
        return "\n".join(lines)

    def write(self, out_dir, figure=True):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if figure and self.series:
            self.files.setdefault("figure", "report.png")
        self.files.setdefault("timing", "timing.csv")
        (out / "report.csv").write_text(self.to_csv())
        (out / "timing.csv").write_text(self.timing_csv())
        if figure and self.series:
            plot_series(self, out / "report.png")
        return out / "report.csv"


def plot_series(report: Report, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.2), dpi=100)
    for name, pts in report.series.items():
        if pts:
            xs, ys = zip(*pts)
            ax.plot(xs, ys, marker="." if len(pts) < 60 else None, lw=1.2, label=name)
    xlabel = "depth" if report.mode == "explore" else "step"
    ax.set_xlabel(xlabel)
    ax.set_title(f"{report.mode} {report.scenario}", fontsize=9)
    ax.legend(frameon=False, fontsize=8)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
