import json

import numpy as np
import pytest

from symcomp.cli import main
from symcomp.composition import Network
from symcomp.fixtures import example1, t3
from symcomp.metrics import linf, neighbor_max
from symcomp.randnet import load_config, random_network
from symcomp.ts import Controller, FiniteTransitionSystem

from conftest import CONFIG


def _dump(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def _net_file(tmp_path, net, M=None, name="net.json"):
    d = {"components": [c.to_json() for c in net.components], "edges": [list(e) for e in net.edges]}
    if M is not None:
        d["M"] = list(M)
    return _dump(tmp_path / name, d)


def _safe_file(tmp_path, safes, name="safe.json"):
    items = [{"states": np.flatnonzero(s).tolist(), "n_states": len(s)} for s in safes]
    return _dump(tmp_path / name, {"components": items})


def _traffic_s1(tmp_path):
    return _dump(tmp_path / "s1.json", {"kind": "traffic", "component": 1, "domain": [0, 30]})


def test_sequence_abstraction_size_and_determinism(tmp_path, capsys):
    model = _traffic_s1(tmp_path)
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["abstract", "--model", model, "--sequence", "10", "8", "--out", str(out1)]) == 0
    assert main(["abstract", "--model", model, "--sequence", "10", "8", "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    d = json.loads(out1.read_text())
    assert len(d["system"]["states"]) <= 2 ** 8
    assert d["eps"] == pytest.approx((1 - 70 * (10 / 3600) / 0.4) ** 8 * 20)


def test_grid_abstraction_cli(tmp_path):
    model = _dump(tmp_path / "m.json", {"kind": "microgrid", "topology": "5-unit", "unit": 5})
    grid = _dump(tmp_path / "g.json", {"lo": [438.75], "hi": [461.25], "n": [5]})
    out = tmp_path / "a.json"
    assert main(["abstract", "--model", model, "--grid", grid, "--out", str(out)]) == 0
    d = json.loads(out.read_text())
    assert d["eps"] == pytest.approx(4.5) and d["mu"] == 0.0
    assert d["relation"]["type"] == "cell_membership"


def test_invalid_grid_exits_2(tmp_path, capsys):
    model = _traffic_s1(tmp_path)
    grid = _dump(tmp_path / "g.json", {"lo": [0], "hi": [30], "n": [0]})
    assert main(["abstract", "--model", model, "--grid", grid]) == 2
    assert "error" in capsys.readouterr().err


def test_unparseable_input_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["abstract", "--model", str(bad), "--sequence", "10", "2"]) == 2
    assert main(["no-such-command"]) == 2


def test_incompatible_compose_exits_3(tmp_path, capsys):
    S1 = FiniteTransitionSystem(3, range(3), [], [[0.0], [1.0], [2.0]])
    S2 = FiniteTransitionSystem(2, range(2), [], [[0.0], [0.0]], int_values=[[0.5], [1.5]],
                                int_input_space=neighbor_max([linf(1)], [0]))
    path = _net_file(tmp_path, Network([S1, S2], [(0, 1)]))
    assert main(["compose", "--network", path, "--M", "0,0.4"]) == 3
    assert "incompatible" in capsys.readouterr().err
    assert main(["compose", "--network", path, "--M", "0,0.5", "--out", str(tmp_path / "c.json")]) == 0
    assert (tmp_path / "c.json.index.json").exists()


def test_single_component_compose_is_passthrough(tmp_path):
    path = _net_file(tmp_path, Network([t3()]))
    out = tmp_path / "c.json"
    assert main(["compose", "--network", path, "--out", str(out)]) == 0
    C = FiniteTransitionSystem.loads(out.read_text())
    assert C.transitions.tolist() == t3().transitions.tolist()


def test_larger_M_gives_transition_superset(tmp_path, capsys):
    rng = np.random.default_rng(7)
    cfg = load_config(CONFIG)
    done = 0
    for _ in range(20):
        net = random_network(rng, cfg, extra_int=1)
        path = _net_file(tmp_path, net)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        M = ",".join(["0.5"] * net.N)
        Mbar = ",".join(["1.5"] * net.N)
        if main(["compose", "--network", path, "--M", M, "--out", str(a)]) != 0:
            continue
        assert main(["compose", "--network", path, "--M", Mbar, "--out", str(b)]) == 0
        assert main(["diff", str(a), str(b)]) == 0
        done += 1
    assert done > 0
    capsys.readouterr()


def test_diff_reports_missing(tmp_path, capsys):
    full = tmp_path / "full.json"
    full.write_text(t3().dumps())
    small = FiniteTransitionSystem(3, range(3), [(0, 0, 0, 0)], t3().outputs, t3().ext_values)
    part = tmp_path / "part.json"
    part.write_text(small.dumps())
    assert main(["diff", str(part), str(full)]) == 0
    assert main(["diff", str(full), str(part)]) == 1
    assert json.loads(capsys.readouterr().out.splitlines()[-1])["subset"] is False


def test_synthesize_t3(tmp_path):
    net = _net_file(tmp_path, Network([t3()]))
    safe = _safe_file(tmp_path, [[True, True, False]])
    out, rep = tmp_path / "c.json", tmp_path / "r.json"
    assert main(["synthesize", "--mode", "monolithic", "--network", net, "--safe", safe,
                 "--out", str(out), "--report", str(rep)]) == 0
    C = Controller.from_json(json.loads(out.read_text()))
    assert C.enabled(1) == {(1, 0)} and C.enabled(0) == {(0, 0), (1, 0)}
    assert json.loads(rep.read_text())["monolithic"]["cont_size"] == 2


def test_synthesize_both_runs_completeness(tmp_path):
    n, safes = example1()
    net = _net_file(tmp_path, n)
    safe = _safe_file(tmp_path, safes)
    rep = tmp_path / "r.json"
    assert main(["synthesize", "--mode", "both", "--network", net, "--safe", safe,
                 "--out", str(tmp_path / "c.json"), "--report", str(rep)]) == 0
    r = json.loads(rep.read_text())
    assert r["complete"]["equal"] is True
    assert r["bottom_up"]["stages"]["composed_states"] < r["bottom_up"]["stages"]["full_states"]


def test_empty_cont_is_not_an_error(tmp_path, caplog):
    net = _net_file(tmp_path, Network([t3()]))
    safe = _safe_file(tmp_path, [[False, False, False]])
    out = tmp_path / "c.json"
    assert main(["synthesize", "--mode", "monolithic", "--network", net, "--safe", safe,
                 "--out", str(out), "--report", str(tmp_path / "r.json")]) == 0
    assert json.loads(out.read_text())["entries"] == []
    assert "empty" in caplog.text


@pytest.mark.parametrize("theorem", ["1", "2", "3", "claim1", "lemma1", "lemma2"])
def test_check_suites_pass(theorem, capsys):
    assert main(["check", "--theorem", theorem, "--seeds", "5", "--config", CONFIG]) == 0


def test_check_zero_seeds_is_vacuous(capsys, caplog):
    assert main(["check", "--theorem", "3", "--seeds", "0", "--config", CONFIG]) == 0
    assert "vacuous" in caplog.text


@pytest.mark.parametrize("theorem", ["1", "3", "lemma2"])
def test_check_corrupted_fails(theorem, capsys):
    assert main(["check", "--theorem", theorem, "--seeds", "5", "--config", CONFIG, "--corrupt"]) == 1
    assert "failed" in capsys.readouterr().out


def _finite_pair(tmp_path):
    S = t3()
    sys_ = tmp_path / "s.json"
    sys_.write_text(S.dumps())
    C = Controller(3, [(0, 0, 0), (0, 1, 0), (1, 1, 0)])
    ctl = tmp_path / "k.json"
    ctl.write_text(C.dumps())
    return str(sys_), str(ctl)


def test_simulate_zero_steps_single_row(tmp_path, capsys):
    s, c = _finite_pair(tmp_path)
    out = tmp_path / "t.csv"
    assert main(["simulate", "--system", s, "--controller", c, "--x0", "0", "--steps", "0", "--csv", str(out)]) == 0
    assert len(out.read_text().strip().splitlines()) == 2


def test_simulate_uncontrollable_start_exits_4(tmp_path, capsys):
    s, c = _finite_pair(tmp_path)
    assert main(["simulate", "--system", s, "--controller", c, "--x0", "2", "--steps", "3"]) == 4


def test_simulate_seed_pinned(tmp_path):
    s, c = _finite_pair(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["--seed", "3", "simulate", "--system", s, "--controller", c,
                     "--x0", "1", "--steps", "20", "--csv", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().strip().splitlines()) == 22


@pytest.mark.slow
def test_microgrid_simulation_is_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["--seed", "11", "simulate", "--case", "microgrid-4", "--steps", "30", "--csv", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = a.read_text().strip().splitlines()
    assert rows[0].startswith("step,time,V1,V2,V3,V4") and len(rows) == 32
