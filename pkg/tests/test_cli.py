import csv

import pytest

from pedsim import cli
from pedsim.corpus import corridor_periodic
from pedsim.engine import ConsistencyError, World

from helpers import scenario_text, start_section


@pytest.fixture(autouse=True)
def single_process(monkeypatch):
    monkeypatch.setenv("PEDSIM_THREADS", "1")


def _write(tmp_path, text, name="s.scn"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _fd(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["run", "--scenario", "corridor_uni", "--steps", "30", "--seed", "1",
                     "--out-dir", str(out)])
    assert code == 0
    assert {p.name for p in out.iterdir()} >= {"fd.csv", "classes.csv", "cmd.pgm"}
    assert _fd(out / "fd.csv")
    assert "steps" in capsys.readouterr().out


def test_missing_scenario_exits_1(tmp_path):
    assert cli.main(["run", "--scenario", str(tmp_path / "nope.scn"), "--steps", "1",
                     "--out-dir", str(tmp_path / "o")]) == 1


def test_syntax_error_exits_1(tmp_path):
    path = _write(tmp_path, "[map]\n..?..D1\n")
    assert cli.main(["run", "--scenario", path, "--steps", "1", "--out-dir", str(tmp_path / "o")]) == 1


def test_validation_error_exits_2(tmp_path):
    text = scenario_text(["S1...D1"], sections=start_section(1, "block(1)", "1.2:1", dest=7))
    path = _write(tmp_path, text)
    assert cli.main(["run", "--scenario", path, "--steps", "1", "--out-dir", str(tmp_path / "o")]) == 2


def test_slope_violation_exits_2(tmp_path):
    sec = "[slope.1]\nk_enter_a = 1/2\nk_exit_a = 3\nk_enter_b = 1/2\nk_exit_b = 2\n"
    path = _write(tmp_path, scenario_text(["..A1a..A1b..D1"], sections=sec))
    assert cli.main(["run", "--scenario", path, "--steps", "1", "--out-dir", str(tmp_path / "o")]) == 2


def test_runtime_inconsistency_exits_3(tmp_path, monkeypatch):
    def broken(self):
        raise ConsistencyError("occupancy mismatch")

    monkeypatch.setattr(World, "step", broken)
    assert cli.main(["run", "--scenario", "corridor_uni", "--steps", "5",
                     "--out-dir", str(tmp_path / "o")]) == 3


def test_same_seed_identical_trajectories(tmp_path):
    for name in ("a", "b"):
        assert cli.main(["run", "--scenario", "corridor_bi", "--steps", "40", "--seed", "9",
                         "--trajectories", "on", "--out-dir", str(tmp_path / name)]) == 0
    a = (tmp_path / "a" / "trajectories.csv").read_bytes()
    assert a == (tmp_path / "b" / "trajectories.csv").read_bytes()
    assert len(a.splitlines()) > 40


def test_trajectories_off_by_default(tmp_path):
    cli.main(["run", "--scenario", "corridor_uni", "--steps", "3", "--out-dir", str(tmp_path)])
    assert not (tmp_path / "trajectories.csv").exists()


def test_agents_ladder_density_increases(tmp_path):
    path = _write(tmp_path, corridor_periodic(length=20, width=4))
    out = tmp_path / "sweep"
    assert cli.main(["sweep", "--scenario", path, "--steps", "30", "--seed", "2",
                     "--agents", "8,32,64", "--out-dir", str(out)]) == 0
    dens = [float(r["density"]) for r in _fd(out / "fd.csv")]
    assert len(dens) == 3 and dens == sorted(dens)
    assert sorted(p.name for p in out.iterdir() if p.is_dir()) == [
        "rung00_agents_8", "rung01_agents_32", "rung02_agents_64"]


def test_single_rung_matches_run(tmp_path):
    path = _write(tmp_path, corridor_periodic(length=20, width=4))
    common = ["--scenario", path, "--steps", "30", "--seed", "4", "--agents", "24"]
    cli.main(["run", *common, "--out-dir", str(tmp_path / "run")])
    cli.main(["sweep", *common, "--out-dir", str(tmp_path / "sweep")])
    assert (tmp_path / "run" / "fd.csv").read_bytes() == (tmp_path / "sweep" / "fd.csv").read_bytes()


def test_inflow_sweep_writes_cmd_per_rung(tmp_path):
    out = tmp_path / "tj"
    assert cli.main(["sweep", "--scenario", "t_junction", "--steps", "40", "--seed", "1",
                     "--inflow", "0.5,2.0", "--out-dir", str(out)]) == 0
    assert (out / "rung00_inflow_0.5" / "cmd.pgm").is_file()
    assert (out / "rung01_inflow_2" / "cmd.pgm").is_file()


def test_outputs_stay_under_out_dir(tmp_path, monkeypatch):
    work = tmp_path / "cwd"
    work.mkdir()
    monkeypatch.chdir(work)
    cli.main(["run", "--scenario", "corridor_uni", "--steps", "5", "--out-dir", str(tmp_path / "o"),
              "--trajectories", "on"])
    assert list(work.iterdir()) == []
    assert {p.parent for p in (tmp_path / "o").rglob("*")} == {tmp_path / "o"}


@pytest.mark.parametrize("text,expected", [
    ("1,2,3", [1.0, 2.0, 3.0]),
    ("0.5:1.5:0.5", [0.5, 1.0, 1.5]),
])
def test_parse_ladder(text, expected):
    assert cli.parse_ladder(text) == expected


def test_bad_on_off_rejected(tmp_path):
    with pytest.raises(SystemExit):
        cli.main(["run", "--scenario", "corridor_uni", "--steps", "1", "--out-dir", str(tmp_path),
                  "--trajectories", "maybe"])
