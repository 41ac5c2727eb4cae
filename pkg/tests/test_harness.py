import csv
from pathlib import Path

import pytest

from bgsim.errors import ConfigError, TraceParseError
from bgsim.harness.cli import main
from bgsim.harness.config import config_from_items, load_config, parse_config
from bgsim.harness.runner import explore_scenario, replay_trace, run_scenario
from bgsim.harness.tracefile import read_trace

SCEN = Path(__file__).resolve().parent.parent / "scenarios"

ABD = """
[scenario]
impl = abd
m = 2
n = 3
[workload]
client0 = write(1); read()
client1 = write(2)
[scheduler]
kind = fair
seed = 4
[checks]
run = linearizable, completes
"""


def rows(path):
    with open(path) as f:
        return list(csv.DictReader(f))


@pytest.mark.parametrize("text,field", [
    ("[workload]\nclient0 = read()\n", "scenario"),
    ("[scenario]\nm = 1\n", "scenario.impl"),
    ("[scenario]\nimpl = abd\nm = two\n", "scenario.m"),
    ("[scenario]\nimpl = abd\nm = 1\n[workload]\nclient0 = write(\n", "workload.client0"),
    ("[scenario]\nimpl = abd\nm = 1\n[scheduler]\nkind = lucky\n", "scheduler.kind"),
    ("[scenario]\nimpl = abd\nm = 1\n[crash]\nat = 5\n", "crash.at"),
])
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as ei:
        parse_config(text)
    assert str(ei.value).startswith(field)


def test_config_items_roundtrip():
    for path in sorted(SCEN.glob("*.ini")):
        cfg = load_config(path)
        assert config_from_items(cfg.items()).items() == cfg.items()


def test_run_then_replay(tmp_path):
    rep = run_scenario(parse_config(ABD), tmp_path / "run")
    assert rep.exit_code == 0
    trace = tmp_path / "run" / "trace.txt"
    assert read_trace(trace).digest == rep.counts["digest"]
    again = replay_trace(trace, tmp_path / "replay")
    assert again.exit_code == 0 and again.counts["steps"] == rep.counts["steps"]


def test_flipped_digest_is_located(tmp_path):
    run_scenario(parse_config(ABD), tmp_path)
    lines = (tmp_path / "trace.txt").read_text().splitlines()
    k = next(i for i, l in enumerate(lines) if l.startswith("STEP 10 "))
    parts = lines[k].split(" ")
    parts[-1] = "0" * len(parts[-1])
    lines[k] = " ".join(parts)
    bad = tmp_path / "bad.txt"
    bad.write_text("\n".join(lines) + "\n")
    rep = replay_trace(bad)
    assert rep.exit_code == 2 and rep.counts["first_mismatch"] == 10


def test_truncated_trace(tmp_path):
    run_scenario(parse_config(ABD), tmp_path)
    lines = (tmp_path / "trace.txt").read_text().splitlines()
    cut = tmp_path / "cut.txt"
    cut.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(TraceParseError) as ei:
        read_trace(cut)
    assert "truncated" in str(ei.value)
    assert main(["replay", str(cut), "--out", str(tmp_path / "o")]) == 1


def test_explore_depth_zero_is_vacuous(tmp_path):
    cfg = parse_config(ABD.replace("kind = fair", "kind = exhaustive") + "[budget]\ndepth = 0\n")
    rep = explore_scenario(cfg, tmp_path)
    assert rep.exit_code == 0 and rep.counts["states"] == 1


def test_explore_rejects_random_scheduler(tmp_path):
    with pytest.raises(ConfigError):
        explore_scenario(parse_config(ABD), tmp_path)


def test_runs_are_byte_identical(tmp_path):
    for d in ("a", "b"):
        run_scenario(load_config(SCEN / "bg_abd.ini"), tmp_path / d)
    for name in ("trace.txt", "induced.trace", "report.csv", "report.png"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_report_lists_every_check_and_file(tmp_path):
    rep = run_scenario(load_config(SCEN / "bg_abd.ini"), tmp_path)
    table = rows(tmp_path / "report.csv")
    checks = {r["name"]: r["value"] for r in table if r["section"] == "check"}
    assert checks == {c: "holds" for c in ("refinement", "linearizable", "completes", "stalled")}
    for r in table:
        if r["section"] == "file":
            assert (tmp_path / r["value"]).exists()
    assert rep.exit_code == 0
    assert replay_trace(tmp_path / "induced.trace").exit_code == 0


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SIMCLI_OUT", str(tmp_path / "env"))
    assert main(["run", str(SCEN / "abd_run.ini")]) == 0
    assert (tmp_path / "env" / "report.csv").exists()
    # a read returning a value nobody wrote
    hist = tmp_path / "h.txt"
    hist.write_text('CALL a write 1\nRET a "ok"\nCALL b read -\nRET b 7\n')
    assert main(["check", str(hist), "--out", str(tmp_path / "c")]) == 2
    assert any(r["section"] == "counterexample" for r in rows(tmp_path / "c" / "report.csv"))
    assert main(["explore", str(SCEN / "abd_explore.ini"), "--budget", "50",
                 "--out", str(tmp_path / "x")]) == 3
    assert main(["run", str(tmp_path / "missing.ini")]) == 1
    assert "error" in capsys.readouterr().err
