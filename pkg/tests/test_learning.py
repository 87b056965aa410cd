import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from liesrnn.autodiff import init_mlp
from liesrnn.evalcli.systems import toy_two_body
from liesrnn.geometry import orthonormality_defect
from liesrnn.integrators import StepContext, StepScheme, rollout_arrays
from liesrnn.learning import (
    DIVERGED_LOSS,
    DatasetError,
    LearnedDynamics,
    TrainConfig,
    TrainingDiverged,
    batch_loss,
    fit_normalizers,
    generate_dataset,
    load_dataset,
    load_model,
    perturb,
    predict_rollout,
    save_dataset,
    save_model,
    split_counts,
    srnn_loss,
    train,
)
from liesrnn.learning.model import Normalizer
from liesrnn.potentials import DragForcing, truth_potential
from liesrnn.rigidbody import Phase

from gradcheck import check


@pytest.fixture(scope="module")
def toy():
    return toy_two_body()


@pytest.fixture(scope="module")
def small_ds(toy):
    params, init = toy
    return generate_dataset(params, truth_potential(params), None, init, L=5, K=6, dt=0.1, fine_h=0.1 / 8,
                            noise_sigma=0.01, seed=3)


def random_model(params, seed=0, conservative_only=False, hidden=(6, 6)):
    rng = np.random.default_rng(seed)
    n = params.n
    v = init_mlp(12 * n, 1, hidden, rng, zero_head=False)
    f = init_mlp(18 * n, 6 * n, hidden, rng, zero_head=False)
    return LearnedDynamics(params, v, f, v_scale=1e-2, f_scale=1e-2, conservative_only=conservative_only)


# ---------------------------------------------------------------- dataset


def test_split_counts():
    assert split_counts(32, 0.8) == (25, 7)
    assert split_counts(10, 0.8) == (8, 2)
    assert split_counts(1, 0.8) == (0, 1)


def test_dataset_shapes_and_truth(small_ds, toy):
    params, init = toy
    ds = small_ds
    assert ds.q.shape == (5, 7, 2, 3) and ds.R.shape == (5, 7, 2, 3, 3)
    assert list(ds.split) == ["train"] * 4 + ["val"]
    np.testing.assert_allclose(ds.t, 0.1 * np.arange(7))
    # snapshots are a LieT2 fine-step rollout of the first snapshot
    ctx = StepContext(params, truth_potential(params), h=0.1 / 8)
    x0 = ds.phase(2, 0)
    traj, _ = rollout_arrays(x0, ctx, 48, "lie_t2", stride=8)
    np.testing.assert_array_equal(traj.q, ds.q[2, 1:])
    assert orthonormality_defect(ds.R).max() < 1e-12
    assert ds.pairs("train").shape == (4 * 6, 2)
    assert ds.pairs("val", 3).shape == (4, 2)


def test_dataset_is_deterministic(toy):
    params, init = toy
    kw = dict(L=3, K=4, dt=0.1, fine_h=0.025, noise_sigma=0.01)
    a = generate_dataset(params, truth_potential(params), None, init, seed=9, **kw)
    b = generate_dataset(params, truth_potential(params), None, init, seed=9, **kw)
    c = generate_dataset(params, truth_potential(params), None, init, seed=10, **kw)
    for name in ("q", "p", "R", "Pi"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()
    assert a.q.tobytes() != c.q.tobytes()


def test_dataset_threads_do_not_change_bits(toy):
    params, init = toy
    kw = dict(L=4, K=3, dt=0.1, fine_h=0.025, noise_sigma=0.01, seed=1)
    a = generate_dataset(params, truth_potential(params), None, init, threads=1, **kw)
    b = generate_dataset(params, truth_potential(params), None, init, threads=3, **kw)
    assert a.q.tobytes() == b.q.tobytes() and a.R.tobytes() == b.R.tobytes()


def test_dataset_file_roundtrip_bit_exact(small_ds, tmp_path):
    path = tmp_path / "d.txt"
    save_dataset(small_ds, path)
    back = load_dataset(path)
    for name in ("t", "q", "p", "R", "Pi"):
        assert getattr(back, name).tobytes() == getattr(small_ds, name).tobytes()
    assert list(back.split) == list(small_ds.split)
    assert back.dt == small_ds.dt and back.params == small_ds.params
    assert back.meta == small_ds.meta
    path2 = tmp_path / "d2.txt"
    save_dataset(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_dataset_file_errors(tmp_path, small_ds):
    bad = tmp_path / "bad.txt"
    bad.write_text("hello\n")
    with pytest.raises(DatasetError):
        load_dataset(bad)
    path = tmp_path / "d.txt"
    save_dataset(small_ds, path)
    lines = path.read_text().splitlines()
    lines[3] = lines[3] + " 1.0"
    bad.write_text("\n".join(lines))
    with pytest.raises(DatasetError):
        load_dataset(bad)


def test_dataset_rejects_bad_arguments(toy):
    params, init = toy
    with pytest.raises(DatasetError):
        generate_dataset(params, truth_potential(params), None, init, L=1, K=1, dt=0.1, fine_h=0.03)
    with pytest.raises(DatasetError):
        generate_dataset(params, truth_potential(params), None, init, L=0, K=1, dt=0.1, fine_h=0.05)


@given(st.floats(0.0, 0.1), st.integers(0, 2**32 - 1))
def test_perturb_keeps_rotations(sigma, seed):
    params, init = toy_two_body()
    x = perturb(init.phase(), sigma, np.random.default_rng(seed))
    assert orthonormality_defect(x.R).max() < 1e-13
    assert np.all(np.sign(x.q) * np.sign(init.phase().q) >= 0) or sigma > 0.05


def test_perturb_zero_sigma_is_copy(toy):
    x = toy[1].phase()
    y = perturb(x, 0.0, np.random.default_rng(0))
    for a, b in zip(x, y):
        assert np.array_equal(a, b) and a is not b


# ---------------------------------------------------------------- model


def test_normalizers():
    rng = np.random.default_rng(0)
    q = rng.standard_normal((5, 7, 2, 3)) * 10 + 3
    p = rng.standard_normal((5, 7, 2, 3))
    pi = np.zeros((5, 7, 2, 3))
    pot, frc = fit_normalizers(q, p, pi, 2)
    assert pot.mean.shape == (24,) and frc.scale.shape == (36,)
    np.testing.assert_array_equal(pot.scale[6:], 1.0)
    assert np.all(frc.scale[30:] == 1.0)  # zero-variance Pi group falls back to 1
    ident = Normalizer.identity(3)
    np.testing.assert_array_equal(ident(np.arange(3.0)), np.arange(3.0))


def test_zero_head_model_equals_point_mass_physics(toy):
    params, init = toy
    model = LearnedDynamics.initial(params, hidden=(8, 8), seed=0)
    x = init.phase()
    pred = predict_rollout(model, x, 0.1, 4)[0]
    ctx = StepContext(params, truth_potential(params, quadrupole=False), h=0.025)
    ref, _ = rollout_arrays(x, ctx, 4, "lie_t2", stride=4, backend="numpy")
    for a, b in zip(pred, ref):
        np.testing.assert_allclose(a, b[0], rtol=1e-13, atol=1e-15)


def test_learned_potential_gradient_matches_fd(toy):
    params, init = toy
    model = random_model(params)
    pot = model.potential().models[1]
    x = init.phase()
    gq, gr = pot.grad(x.q, x.R)
    eps = 1e-6
    for idx in np.ndindex(x.q.shape):
        d = np.zeros_like(x.q)
        d[idx] = eps
        fd = (pot.value(x.q + d, x.R) - pot.value(x.q - d, x.R)) / (2 * eps)
        assert abs(gq[idx] - fd) <= 1e-6 * abs(fd) + 1e-10
    for idx in np.ndindex(x.R.shape):
        d = np.zeros_like(x.R)
        d[idx] = eps
        fd = (pot.value(x.q, x.R + d) - pot.value(x.q, x.R - d)) / (2 * eps)
        assert abs(gr[idx] - fd) <= 1e-6 * abs(fd) + 1e-10


def test_model_checkpoint_roundtrip(toy, tmp_path):
    params, _ = toy
    model = random_model(params, seed=4)
    model.v_norm = Normalizer(np.arange(24.0), np.linspace(1, 2, 24))
    path = tmp_path / "m.ckpt"
    save_model(path, model, {"seed": 1}, [{"epoch": 0, "val_loss": 0.5}])
    back, meta, opt = load_model(path)
    assert opt is None
    for a, b in zip(model.parameter_arrays(), back.parameter_arrays()):
        assert a.tobytes() == b.tobytes()
    assert back.v_norm.mean.tobytes() == model.v_norm.mean.tobytes()
    assert back.params == model.params and back.v_scale == model.v_scale
    assert meta["curve"] == [{"epoch": 0, "val_loss": 0.5}]


# ---------------------------------------------------------------- loss and gradients


def test_loss_value_and_report():
    a = Phase(np.zeros((2, 1, 3)), np.ones((2, 1, 3)), np.zeros((2, 1, 3, 3)), np.zeros((2, 1, 3)))
    b = Phase(np.ones((2, 1, 3)), np.ones((2, 1, 3)), np.zeros((2, 1, 3, 3)), np.zeros((2, 1, 3)))
    loss, rep = srnn_loss([a], [b])
    assert float(loss) == 3.0 and rep.q == 3.0 and rep.p == 0.0
    _, rep = srnn_loss([a], [b], weights={"q": 2.0}, diverged=2)
    assert rep.total == pytest.approx((6.0 * 2 + DIVERGED_LOSS * 2) / 4)
    assert rep.samples == 4 and rep.diverged == 2


@given(st.permutations(range(5)))
def test_loss_is_permutation_invariant(perm):
    rng = np.random.default_rng(1)
    x = Phase(*(rng.standard_normal(s) for s in ((5, 2, 3), (5, 2, 3), (5, 2, 3, 3), (5, 2, 3))))
    y = Phase(*(rng.standard_normal(s) for s in ((5, 2, 3), (5, 2, 3), (5, 2, 3, 3), (5, 2, 3))))
    perm = list(perm)
    _, a = srnn_loss([x], [y])
    _, b = srnn_loss([Phase(*(v[perm] for v in x))], [Phase(*(v[perm] for v in y))])
    assert a.total == pytest.approx(b.total, rel=1e-14)


def test_geodesic_loss_term():
    from liesrnn.geometry import rot_z

    r = np.stack([np.eye(3)])[None]
    s = rot_z(0.3)[None, None]
    x = Phase(np.zeros((1, 1, 3)), np.zeros((1, 1, 3)), s, np.zeros((1, 1, 3)))
    y = Phase(np.zeros((1, 1, 3)), np.zeros((1, 1, 3)), r, np.zeros((1, 1, 3)))
    _, rep = srnn_loss([x], [y], geodesic_R=True)
    assert rep.R == pytest.approx(4 * np.sin(0.15) ** 2, rel=1e-12)


def _rollout_loss_fn(model, ds, scheme, H, k_loss, pairs):
    i, k = pairs[:, 0], pairs[:, 1]
    start = ds.phase(i, k)
    targets = [ds.phase(i, k + j) for j in range(1, k_loss + 1)]

    def f(*arrays):
        m = model.with_parameters(list(arrays))
        pred = predict_rollout(m, start, ds.dt, H, k_loss, scheme)
        return srnn_loss(pred, targets)[0]
    return f


def test_loss_through_lie_t2_rollout_matches_fd(small_ds, toy):
    params, _ = toy
    model = random_model(params, seed=1)
    pairs = np.array([[0, 0], [3, 2]])
    f = _rollout_loss_fn(model, small_ds, StepScheme.LIE_T2, 4, 2, pairs)
    assert check(f, [np.array(a) for a in model.parameter_arrays()]) <= 1e-5


@pytest.mark.parametrize("scheme", [s for s in StepScheme if s is not StepScheme.LIE_T2])
def test_loss_through_baseline_rollouts_matches_fd(small_ds, toy, scheme):
    params, _ = toy
    model = random_model(params, seed=2, hidden=(4,))
    pairs = np.array([[1, 1]])
    f = _rollout_loss_fn(model, small_ds, scheme, 2, 1, pairs)
    assert check(f, [np.array(a) for a in model.parameter_arrays()]) <= 1e-5


def test_batch_loss_gradient_matches_standalone(small_ds, toy):
    from liesrnn.autodiff import Tape

    params, _ = toy
    model = random_model(params, seed=3, conservative_only=True)
    cfg = TrainConfig(substeps=2, hidden=(6, 6))
    pairs = small_ds.pairs("train")[:5]
    grads, rep, div = batch_loss(model, small_ds, pairs, cfg, Tape())
    assert div == 0 and len(grads) == len(model.parameter_arrays())
    _, rep2, _ = batch_loss(model, small_ds, pairs, cfg)
    assert rep.total == rep2.total


# ---------------------------------------------------------------- training


def test_training_is_deterministic_and_improves(small_ds):
    cfg = TrainConfig(batch_size=8, lr=1e-3, max_epochs=3, hidden=(16, 16), v_scale=0.01, substeps=2)
    a = train(small_ds, cfg)
    b = train(small_ds, cfg)
    assert [r["val_loss"] for r in a.curve] == [r["val_loss"] for r in b.curve]
    for x, y in zip(a.model.parameter_arrays(), b.model.parameter_arrays()):
        assert x.tobytes() == y.tobytes()
    assert a.curve[a.best_epoch]["val_loss"] <= a.curve[0]["val_loss"]
    assert len(a.curve) == 4 and a.stop_reason == "max_epochs"


def test_training_with_forcing_network(toy):
    params, init = toy
    ds = generate_dataset(params, truth_potential(params), DragForcing(0.05, 0.05), init, L=3, K=3,
                          dt=0.1, fine_h=0.025, noise_sigma=0.01, seed=0)
    cfg = TrainConfig(batch_size=4, lr=1e-3, max_epochs=2, hidden=(8,), conservative_only=False, f_scale=0.01, substeps=1)
    res = train(ds, cfg)
    assert res.model.forcing() is not None and res.model.f_net is not None


def test_early_stopping(small_ds):
    cfg = TrainConfig(batch_size=8, lr=1e-1, max_epochs=50, patience=1, hidden=(8,), substeps=1)
    res = train(small_ds, cfg)
    assert res.stop_reason == "plateau" and len(res.curve) < 51


def test_batch_larger_than_data_samples_with_replacement(small_ds):
    cfg = TrainConfig(batch_size=1000, max_epochs=1, hidden=(4,), substeps=1)
    res = train(small_ds, cfg)
    assert len(res.curve) == 2


def test_all_diverged_epoch_aborts(small_ds):
    cfg = TrainConfig(batch_size=4, max_epochs=2, hidden=(4,), substeps=1, v_scale=1e300)
    model = random_model(small_ds.params, hidden=(4,), conservative_only=True)
    model.v_scale = 1e300
    with pytest.raises(TrainingDiverged) as exc:
        train(small_ds, cfg, model=model)
    assert exc.value.curve[0]["val_diverged"] > 0


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(substeps=0)
    with pytest.raises(ValueError):
        TrainConfig(scheme="nope")
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    assert TrainConfig().as_dict()["hidden"] == [256, 256, 256]
