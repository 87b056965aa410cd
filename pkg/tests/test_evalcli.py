import json
import math

import numpy as np
import pytest

from liesrnn.evalcli import cli
from liesrnn.evalcli.config import ConfigError, load_config, parse_config
from liesrnn.evalcli.experiments import (
    CONVERGENCE_HEADER,
    convergence_csv,
    eccentricity_vector,
    fit_slope,
    ordering_check,
    precession_angle,
)
from liesrnn.evalcli.metrics import (
    MetricsReport,
    metric_conservation,
    metric_trajectory,
    reports_from_csv,
    reports_to_csv,
)
from liesrnn.evalcli.systems import SYSTEMS, kepler_point_pair, toy_two_body, trappist_like
from liesrnn.geometry import rot_z
from liesrnn.integrators import StepContext, rollout_arrays
from liesrnn.learning import load_dataset
from liesrnn.potentials import truth_potential
from liesrnn.rigidbody import Phase

BASE = {"schema_version": 1, "seed": 0, "system": {"preset": "toy_two_body"}}


def write_config(tmp_path, **sections):
    cfg = {**BASE, **sections}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


# ---------------------------------------------------------------- config


def test_config_defaults_and_overrides():
    cfg = parse_config(BASE)
    assert cfg.integrator.scheme == "lie_t2" and cfg.train.batch_size == 256
    cfg.apply_overrides(seed=5, scheme="cf4", steps=20, h=0.01, substeps=2)
    assert cfg.seed == cfg.data.seed == cfg.train.seed == 5
    assert cfg.integrator.scheme == cfg.train.scheme == "lie_rk4"
    assert cfg.integrator.steps == cfg.eval.steps == 20
    assert cfg.integrator.h == 0.01 and cfg.train.substeps == 2
    assert json.loads(json.dumps(cfg.to_dict()))["train"]["hidden"] == [256, 256, 256]


@pytest.mark.parametrize("bad", [
    {"seed": 0, "system": {"preset": "toy_two_body"}},
    {"schema_version": 2, "seed": 0, "system": {"preset": "toy_two_body"}},
    {"schema_version": 1, "system": {"preset": "toy_two_body"}},
    {"schema_version": 1, "seed": 0},
    {**BASE, "extra": 1},
    {**BASE, "train": {"learning_rate": 1}},
    {**BASE, "system": {"preset": "nope"}},
    {**BASE, "system": {"preset": "toy_two_body", "bodies": []}},
    {**BASE, "integrator": {"scheme": "magic"}},
    {**BASE, "integrator": {"h": -1.0}},
    [],
])
def test_config_rejects(bad):
    with pytest.raises(ConfigError):
        parse_config(bad)


def test_config_explicit_bodies():
    cfg = parse_config({**BASE, "system": {"G": 2.0, "bodies": [
        {"mass": 1.0, "inertia": [0.1, 0.1, 0.1], "q": [0, 0, 0], "p": [0, 0, 0]},
        {"mass": 0.1, "inertia": [0.01, 0.01, 0.01], "q": [1, 0, 0], "p": [0, 0.1, 0], "Pi": [0, 0, 0.01]},
    ]}})
    params, state = cfg.system.build()
    assert params.G == 2.0 and params.n == 2
    np.testing.assert_array_equal(state.bodies[1].Pi, [0, 0, 0.01])
    with pytest.raises(ConfigError):
        parse_config({**BASE, "system": {"bodies": [{"mass": 1.0}]}})


def test_load_config_invalid_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_shipped_configs_parse():
    import pathlib

    root = pathlib.Path(__file__).resolve().parents[1] / "configs"
    names = sorted(p.name for p in root.glob("*.json"))
    assert {"toy.json", "convergence.json", "trappist_like.json"} <= set(names)
    for p in root.glob("*.json"):
        load_config(p).system.build()


# ---------------------------------------------------------------- systems


def test_systems_have_center_of_mass_at_rest():
    for name, make in SYSTEMS.items():
        params, state = make()
        x = state.phase()
        total_p = x.p.sum(axis=0)
        assert np.abs(total_p).max() < 1e-12 * max(1.0, np.abs(x.p).max()), name


def test_trappist_like_is_bound_and_finite():
    params, state = trappist_like()
    assert params.n == 8
    ctx = StepContext(params, truth_potential(params), h=1e-4)
    traj, status = rollout_arrays(state.phase(), ctx, 500, "lie_t2", stride=500)
    assert status == 0 and np.all(np.isfinite(traj.q))


# ---------------------------------------------------------------- metrics


def test_metric_trajectory_known_values():
    q = np.zeros((2, 2, 3))
    R = np.broadcast_to(np.eye(3), (2, 2, 3, 3)).copy()
    pred_q = q.copy()
    pred_q[:, 1, 0] = 3.0
    pred_q[:, 0, 1] = 4.0
    pred_R = R.copy()
    pred_R[:, 0] = rot_z(0.25)
    z = np.zeros((2, 2, 3))
    dq, dR = metric_trajectory(Phase(pred_q, z, pred_R, z), Phase(q, z, R, z))
    assert dq == pytest.approx(5.0) and dR == pytest.approx(0.25)
    pred_q[0, 0, 0] = np.nan
    assert metric_trajectory(Phase(pred_q, z, pred_R, z), Phase(q, z, R, z)) == (math.inf, math.inf)
    with pytest.raises(ValueError):
        metric_trajectory(Phase(q[:1], z, R[:1], z), Phase(q, z, R, z))


def test_metric_conservation():
    params, state = kepler_point_pair()
    pot = truth_potential(params, quadrupole=False)
    x = state.phase()
    traj = Phase(*(np.stack([a, a]) for a in x))
    defect, err, absolute = metric_conservation(traj, params, pot)
    assert defect == 0.0 and err == 0.0 and not absolute
    _, _, absolute = metric_conservation(traj, params, pot, absolute=True)
    assert absolute


def test_report_roundtrips_bit_exact():
    r = MetricsReport("lie_t2", 0.1 + 0.2, 1 / 3, None, 2.5e-300, math.inf, 7.0, 1e-16, 3.3, False, 500, True)
    assert MetricsReport.from_json(r.to_json()) == r
    text = reports_to_csv([r, MetricsReport("x")])
    back = reports_from_csv(text)
    assert back[0] == r and back[1] == MetricsReport("x")
    assert reports_to_csv(back) == text
    with pytest.raises(ValueError):
        reports_from_csv("a,b\n")


def test_fit_slope():
    hs = np.array([0.1, 0.05, 0.025])
    assert fit_slope(hs, 3 * hs**2) == pytest.approx(2.0)
    assert math.isnan(fit_slope(hs, [1.0, np.inf, np.nan]))


def test_convergence_csv_header():
    text = convergence_csv([("lie_t2", 0.1, 1e-3, 2e-3, 2.0)])
    lines = text.splitlines()
    assert lines[0] == ",".join(CONVERGENCE_HEADER)
    assert lines[1] == "lie_t2,0.1,0.001,0.002,2.0"


def test_ordering_check_ties():
    mk = lambda label, dq, dR: MetricsReport(label, dq, dR)
    reps = [mk("lie_t2", 1.0, 1.0), mk("rk4", 0.95, 5.0), mk("verlet", math.inf, math.inf)]
    assert ordering_check(reps) == {"dq": True, "dR": True}
    reps[1] = mk("rk4", 0.8, 5.0)
    assert ordering_check(reps) == {"dq": False, "dR": True}


def test_eccentricity_vector_is_conserved_for_point_masses():
    params, state = kepler_point_pair(e=0.3)
    e0 = eccentricity_vector(state.phase(), params)
    assert np.linalg.norm(e0) == pytest.approx(0.3, rel=1e-12)
    ctx = StepContext(params, truth_potential(params, quadrupole=False), h=1e-3)
    traj, _ = rollout_arrays(state.phase(), ctx, 2000, "lie_rk4", stride=100)
    ang = precession_angle(traj, params)
    assert np.abs(ang - ang[0]).max() < 1e-8


# ---------------------------------------------------------------- CLI


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_cli_simulate_then_evaluate_is_exact(tmp_path):
    cfg = write_config(tmp_path, integrator={"steps": 20, "h": 0.025})
    assert run("simulate", "--config", cfg, "--out", tmp_path / "sim") == 0
    ds = load_dataset(tmp_path / "sim" / "trajectory.txt")
    assert ds.K == 20 and ds.dt == 0.025
    cons = json.loads((tmp_path / "sim" / "conservation.json").read_text())
    assert cons["max_defect"] < 1e-12
    assert run("evaluate", "--config", cfg, "--dataset", tmp_path / "sim" / "trajectory.txt", "--out", tmp_path / "ev") == 0
    rep = MetricsReport.from_json((tmp_path / "ev" / "report.json").read_text())
    assert rep.dq == 0.0 and rep.dR == 0.0 and not rep.diverged


def test_cli_data_train_evaluate(tmp_path):
    cfg = write_config(
        tmp_path,
        data={"L": 3, "K": 5, "dt": 0.1, "fine_h": 0.025, "noise_sigma": 0.01},
        train={"batch_size": 8, "max_epochs": 2, "hidden": [8, 8], "substeps": 2, "v_scale": 0.01},
        eval={"steps": 10},
    )
    assert run("gen-data", "--config", cfg, "--out", tmp_path / "d") == 0
    data = tmp_path / "d" / "dataset.txt"
    assert run("train", "--config", cfg, "--dataset", data, "--out", tmp_path / "t") == 0
    curve = (tmp_path / "t" / "curve.csv").read_text().splitlines()
    assert curve[0] == "epoch,train_loss,val_loss,train_diverged,val_diverged" and len(curve) == 4
    ck = tmp_path / "t" / "model.ckpt"
    assert run("evaluate", "--config", cfg, "--dataset", data, "--checkpoint", ck, "--out", tmp_path / "e") == 0
    rep = MetricsReport.from_json((tmp_path / "e" / "report.json").read_text())
    assert rep.label == "learned" and np.isfinite(rep.dq) and rep.dVdq is not None
    assert run("precess-demo", "--config", cfg, "--checkpoint", ck, "--steps", 40, "--out", tmp_path / "p") == 0
    summary = json.loads((tmp_path / "p" / "summary.json").read_text())
    assert set(summary) == {"point_truth", "rigid_truth", "learned"}


def test_cli_reports_are_reproducible(tmp_path):
    cfg = write_config(
        tmp_path,
        data={"L": 3, "K": 5, "dt": 0.1, "fine_h": 0.025, "noise_sigma": 0.01},
        train={"batch_size": 8, "max_epochs": 1, "hidden": [8], "substeps": 2},
        eval={"steps": 10},
    )
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert run("train", "--config", cfg, "--out", out) == 0
        assert run("evaluate", "--config", cfg, "--checkpoint", out / "model.ckpt", "--out", out) == 0
        outs.append(out)
    for name in ("model.ckpt", "curve.csv", "report.json", "report.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_cli_compare_and_convergence(tmp_path):
    cfg = write_config(
        tmp_path,
        eval={"steps": 8},
        convergence={"T": 0.2, "hs": [0.02, 0.01], "top_hs": [0.04, 0.02], "schemes": ["lie_t2", "rk4"]},
    )
    assert run("compare-integrators", "--config", cfg, "--out", tmp_path / "c") == 0
    reps = reports_from_csv((tmp_path / "c" / "physics.csv").read_text())
    assert [r.label for r in reps] == ["euler", "rk4", "verlet", "lie_rk2", "lie_rk4", "lie_t2"]
    assert run("convergence", "--config", cfg, "--out", tmp_path / "v") == 0
    text = (tmp_path / "v" / "convergence_kepler.csv").read_text().splitlines()
    assert text[0] == "scheme,h,err_q,err_R,slope" and len(text) == 5
    slopes = json.loads((tmp_path / "v" / "slopes.json").read_text())
    assert set(slopes) == {"kepler", "top"}


def test_cli_exit_codes(tmp_path, capsys):
    # usage / configuration problems
    assert run("simulate") == 1
    with pytest.raises(SystemExit) as exc:
        run("no-such-command")
    assert exc.value.code == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**BASE, "bogus": 1}))
    assert run("simulate", "--config", bad) == 1
    # I/O problems
    assert run("simulate", "--config", tmp_path / "missing.json") == 3
    cfg = write_config(tmp_path)
    assert run("evaluate", "--config", cfg, "--dataset", tmp_path / "missing.txt") == 3
    junk = tmp_path / "junk.txt"
    junk.write_text("junk\n")
    assert run("evaluate", "--config", cfg, "--dataset", junk) == 3
    # numerical divergence: explicit Euler on the fast-spinning toy
    assert run("simulate", "--config", cfg, "--scheme", "euler", "--h", 0.1, "--steps", 500, "--out", tmp_path / "s") == 2
