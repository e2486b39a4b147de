import numpy as np
import pytest

from narlab import autodiff as ad
from narlab.algorithms import bellman_ford_trace
from narlab.autodiff import Tensor
from narlab.graphs import GeneratorSpec, generate_er
from narlab.model import (
    GraphBatch,
    Model,
    ModelConfig,
    ModelError,
    RunningMean,
    apply_decay,
    hint_features,
    initial_hints,
    load_checkpoint,
    predict_pointers,
    rollout,
    save_checkpoint,
)

UNREACHED = 1.0e6  # finite stand-in for the +inf sentinel inside latents


def small_batch(n=6, p=0.7, seeds=(1, 2)):
    graphs = [generate_er(GeneratorSpec(n=n, p=p, seed=s)) for s in seeds]
    return graphs, GraphBatch.from_graphs(graphs)


def zeroed(model):
    for t in model.params.values():
        t.data = np.zeros_like(t.data)
    return model


def make_aligned_linear_pgn(latent_dim: int = 8) -> Model:
    """Weights implementing the shortest-path update on latent channel 0:
    negate the sender's value, subtract the edge weight, max-aggregate,
    negate back. Everything else is zero."""
    cfg = ModelConfig(latent_dim=latent_dim, processor="linear_pgn", aggregator="max")
    model = zeroed(Model.init(cfg, seed=0))
    model.params["msg_send"].data[0, 0] = -1.0
    model.params["enc_edge_w"].data[0, 0] = -1.0  # weight channel
    model.params["upd_agg"].data[0, 0] = -1.0
    return model


def run_aligned_steps(model, g, t_steps):
    batch = GraphBatch.from_graphs([g])
    pi, dist = initial_hints(batch)
    _, edge_feats = hint_features(batch, pi, dist)
    eenc = model.encode_edges(edge_feats)
    z = np.zeros((1, g.n, model.config.latent_dim), dtype=np.float32)
    z[0, :, 0] = UNREACHED
    z[0, g.source, 0] = 0.0
    states = []
    zt = Tensor(z)
    x = Tensor(np.zeros_like(z))
    for _ in range(t_steps):
        zt = model.process_step(zt, x, eenc, batch.cand)
        states.append(zt.data[0, :, 0].copy())
    return states


def test_config_validation():
    with pytest.raises(ModelError):
        ModelConfig(processor="transformer")
    with pytest.raises(ModelError):
        ModelConfig(aggregator="median")
    with pytest.raises(ModelError):
        ModelConfig(aggregator="softmax", softmax_temperature=0.0)
    with pytest.raises(ModelError):
        ModelConfig(decay_factor=0.0)


def test_zero_parameters_give_zero_encoding():
    model = zeroed(Model.init(ModelConfig(latent_dim=16), seed=0))
    _, batch = small_batch()
    pi, dist = initial_hints(batch)
    node_feats, edge_feats = hint_features(batch, pi, dist)
    x = model.encode(node_feats, model.zero_latent(batch))
    assert np.all(x.data == 0.0)
    assert np.all(model.encode_edges(edge_feats).data == 0.0)


def test_encoding_is_finite():
    model = Model.init(ModelConfig(latent_dim=32), seed=5)
    _, batch = small_batch()
    pi, dist = initial_hints(batch)
    node_feats, _ = hint_features(batch, pi, dist)
    x = model.encode(node_feats, model.zero_latent(batch))
    assert np.all(np.isfinite(x.data))


@pytest.mark.parametrize("processor", ["mpnn", "pgn", "linear_pgn", "triplet_lite"])
@pytest.mark.parametrize("aggregator", ["max", "mean", "sum", "softmax"])
def test_step_is_permutation_equivariant(processor, aggregator):
    rng = np.random.default_rng(7)
    cfg = ModelConfig(latent_dim=16, processor=processor, aggregator=aggregator, msg_hidden=16, update_hidden=16)
    model = Model.init(cfg, seed=3)
    g = generate_er(GeneratorSpec(n=7, p=0.6, seed=11))
    trace = bellman_ford_trace(g)
    pi0, d0 = trace.steps[1].pi, trace.steps[1].dist

    perm = rng.permutation(g.n)
    inv = np.argsort(perm)
    gp = type(g)(n=g.n, weights=g.weights[np.ix_(inv, inv)], source=int(perm[g.source]))
    pi_p = perm[pi0][inv]
    d_p = d0[inv]

    batch = GraphBatch.from_graphs([g])
    batch_p = GraphBatch.from_graphs([gp])
    z = Tensor(rng.normal(size=(1, g.n, 16)).astype(np.float32))
    z_p = Tensor(z.data[:, inv, :])

    out = model.step(z, batch, pi0[None], d0[None], RunningMean())
    out_p = model.step(z_p, batch_p, pi_p[None], d_p[None], RunningMean())
    assert np.allclose(out_p.z.data, out.z.data[:, inv, :], atol=1e-5)
    # decoded pointers permute too
    pred = predict_pointers(out.pi_logits.data)[0]
    pred_p = predict_pointers(out_p.pi_logits.data)[0]
    assert np.array_equal(pred_p, perm[pred][inv])


def test_no_edges_means_self_message_only():
    # two graphs identical except for an edge far from isolated node 4
    cfg = ModelConfig(latent_dim=8, processor="pgn")
    model = Model.init(cfg, seed=1)
    w = np.zeros((5, 5))
    w[0, 1] = w[1, 0] = 0.5
    g1 = type(generate_er(GeneratorSpec(n=5, p=1.0, seed=0)))(n=5, weights=w, source=0)
    w2 = w.copy()
    w2[1, 2] = w2[2, 1] = 0.3
    g2 = type(g1)(n=5, weights=w2, source=0)
    rng = np.random.default_rng(0)
    z = Tensor(rng.normal(size=(1, 5, 8)).astype(np.float32))
    pi, dist = initial_hints(GraphBatch.from_graphs([g1]))
    o1 = model.step(z, GraphBatch.from_graphs([g1]), pi, dist, RunningMean())
    o2 = model.step(z, GraphBatch.from_graphs([g2]), pi, dist, RunningMean())
    # node 4 is isolated in both graphs: its update only sees its self-message
    assert np.allclose(o1.z.data[0, 4], o2.z.data[0, 4], atol=1e-6)


def test_softmax_limit_matches_max_aggregation():
    rng = np.random.default_rng(3)
    base = ModelConfig(latent_dim=12, processor="pgn", aggregator="max")
    model = Model.init(base, seed=9)
    g = generate_er(GeneratorSpec(n=6, p=0.8, seed=21))
    batch = GraphBatch.from_graphs([g])
    pi, dist = initial_hints(batch)
    z = Tensor(rng.normal(size=(1, 6, 12)).astype(np.float32))
    out_max = model.step(z, batch, pi, dist, RunningMean())
    model_soft = Model(ModelConfig(latent_dim=12, processor="pgn", aggregator="softmax", softmax_temperature=1e-4), model.params)
    out_soft = model_soft.step(z, batch, pi, dist, RunningMean())
    assert np.allclose(out_soft.z.data, out_max.z.data, atol=1e-4)


def test_linear_pgn_step_is_affine_under_sum_aggregation():
    cfg = ModelConfig(latent_dim=10, processor="linear_pgn", aggregator="sum")
    model = Model.init(cfg, seed=13)
    g = generate_er(GeneratorSpec(n=6, p=0.6, seed=2))
    batch = GraphBatch.from_graphs([g])
    pi, dist = initial_hints(batch)
    node_feats, edge_feats = hint_features(batch, pi, dist)
    eenc = model.encode_edges(edge_feats)
    rng = np.random.default_rng(8)

    def f(z_arr, x_arr):
        return model.process_step(Tensor(z_arr), Tensor(x_arr), eenc, batch.cand).data

    za, xa = (rng.normal(size=(1, 6, 10)).astype(np.float32) for _ in range(2))
    zb, xb = (rng.normal(size=(1, 6, 10)).astype(np.float32) for _ in range(2))
    zero = np.zeros_like(za)
    lhs = f(za + zb, xa + xb)
    rhs = f(za, xa) + f(zb, xb) - f(zero, zero)
    assert np.allclose(lhs, rhs, atol=1e-4)


def test_mpnn_step_is_not_affine():
    cfg = ModelConfig(latent_dim=10, processor="mpnn", aggregator="sum", msg_hidden=10, update_hidden=10)
    model = Model.init(cfg, seed=13)
    g = generate_er(GeneratorSpec(n=6, p=0.6, seed=2))
    batch = GraphBatch.from_graphs([g])
    pi, dist = initial_hints(batch)
    _, edge_feats = hint_features(batch, pi, dist)
    eenc = model.encode_edges(edge_feats)
    rng = np.random.default_rng(8)

    def f(z_arr):
        x = Tensor(np.zeros_like(z_arr))
        return model.process_step(Tensor(z_arr), x, eenc, batch.cand, edge_feats).data

    za = rng.normal(size=(1, 6, 10)).astype(np.float32)
    zb = rng.normal(size=(1, 6, 10)).astype(np.float32)
    lhs = f(za + zb)
    rhs = f(za) + f(zb) - f(np.zeros_like(za))
    assert not np.allclose(lhs, rhs, atol=1e-4)


def test_aligned_linear_pgn_reproduces_oracle_distances():
    for seed in range(10):
        g = generate_er(GeneratorSpec(n=4, p=1.0, seed=100 + seed))
        trace = bellman_ford_trace(g)
        model = make_aligned_linear_pgn()
        states = run_aligned_steps(model, g, trace.terminated_at)
        for t, channel in enumerate(states, start=1):
            oracle = trace.steps[t].dist
            expected = np.where(np.isfinite(oracle), oracle, UNREACHED)
            assert np.allclose(channel, expected, atol=1e-6)


def test_decay_identity_at_one():
    z = Tensor(np.random.default_rng(0).normal(size=(2, 3, 4)).astype(np.float32))
    out = apply_decay(z, 1.0, "to_zero", RunningMean())
    assert np.array_equal(out.data, z.data)


def test_decay_to_zero_scales():
    z = Tensor(np.array([[[1.0, 2.0]]], dtype=np.float32))
    out = apply_decay(z, 0.9, "to_zero", RunningMean())
    assert np.allclose(out.data, [[[0.9, 1.8]]])


def test_decay_to_mean_fixed_point():
    rm = RunningMean()
    z = Tensor(np.full((1, 2, 3), 0.7, dtype=np.float32))
    for _ in range(4):
        out = apply_decay(z, 0.5, "to_mean", rm)
        assert np.allclose(out.data, z.data, atol=1e-7)


def test_decay_to_mean_pulls_toward_history():
    rm = RunningMean()
    z1 = Tensor(np.zeros((1, 1, 2), dtype=np.float32))
    apply_decay(z1, 0.5, "to_mean", rm)
    z2 = Tensor(np.ones((1, 1, 2), dtype=np.float32))
    out = apply_decay(z2, 0.5, "to_mean", rm)
    # mean so far is 0, so the new state is pulled halfway down
    assert np.allclose(out.data, 0.5)


def test_decay_bounds_latent_norms():
    cfg = ModelConfig(latent_dim=8, processor="pgn", decay_factor=0.8)
    model = Model.init(cfg, seed=2)
    g = generate_er(GeneratorSpec(n=6, p=0.7, seed=5))
    trace = bellman_ford_trace(g)
    traces, _, latents = rollout(model, [g], [max(4, trace.terminated_at)], mode="self_rollout")
    norms = np.linalg.norm(latents[0].reshape(latents.shape[1], -1), axis=1)
    increments = np.diff(norms, prepend=0.0)
    c = cfg.decay_factor
    bound = np.max(np.abs(increments)) + 1e-6
    for t in range(1, len(norms)):
        assert norms[t] <= c * norms[t - 1] + bound / c


def test_pointer_predictions_respect_mask():
    model = Model.init(ModelConfig(latent_dim=16), seed=4)
    graphs, batch = small_batch(n=8, p=0.3, seeds=(5, 6))
    pi, dist = initial_hints(batch)
    out = model.step(model.zero_latent(batch), batch, pi, dist, RunningMean())
    pred = predict_pointers(out.pi_logits.data)
    for b in range(batch.size):
        for v in range(batch.n):
            assert batch.cand[b, pred[b, v], v]


def test_zero_decoder_predicts_lowest_candidate():
    model = zeroed(Model.init(ModelConfig(latent_dim=8), seed=0))
    graphs, batch = small_batch(n=5, p=1.0, seeds=(3,))
    pi, dist = initial_hints(batch)
    out = model.step(model.zero_latent(batch), batch, pi, dist, RunningMean())
    logits = out.pi_logits.data[0]
    finite = np.isfinite(logits)
    assert np.allclose(logits[finite], logits[finite][0])
    assert np.array_equal(predict_pointers(out.pi_logits.data)[0], np.zeros(5, dtype=np.int64))


def test_rollout_modes_agree_when_predictions_are_oracle():
    # an aligned model cannot be built for hints, so instead check that
    # teacher forcing ignores predictions: swapping decoders cannot change
    # the latents it records
    cfg = ModelConfig(latent_dim=12, processor="pgn")
    model = Model.init(cfg, seed=6)
    g = generate_er(GeneratorSpec(n=6, p=0.8, seed=9))
    trace = bellman_ford_trace(g)
    _, _, lat1 = rollout(model, [g], [trace.terminated_at], "teacher_forced", [trace])
    model.params["dec_ptr_send"].data += 5.0
    model.params["dec_d_w"].data -= 3.0
    _, _, lat2 = rollout(model, [g], [trace.terminated_at], "teacher_forced", [trace])
    assert np.allclose(lat1, lat2)


def test_rollout_records_latents_shape():
    cfg = ModelConfig(latent_dim=8, processor="pgn")
    model = Model.init(cfg, seed=1)
    graphs = [generate_er(GeneratorSpec(n=6, p=0.7, seed=s)) for s in (1, 2, 3)]
    ts = [bellman_ford_trace(g).terminated_at for g in graphs]
    traces, final_out, latents = rollout(model, graphs, ts, "self_rollout")
    assert latents.shape == (3, max(ts), 6, 8)
    for trace, t in zip(traces, ts):
        assert trace.terminated_at == t
    assert final_out.shape == (3, 6)


def test_rollout_latent_hook_changes_predictions():
    cfg = ModelConfig(latent_dim=8, processor="pgn")
    model = Model.init(cfg, seed=1)
    g = generate_er(GeneratorSpec(n=8, p=0.6, seed=4))
    t = bellman_ford_trace(g).terminated_at
    _, out_base, _ = rollout(model, [g], [t], "self_rollout")
    rng = np.random.default_rng(0)
    _, out_pert, _ = rollout(
        model, [g], [t], "self_rollout", latent_hook=lambda i, z: z + rng.normal(scale=50.0, size=z.shape)
    )
    assert not np.array_equal(out_base, out_pert)


def test_run_single_graph_matches_batched_rollout():
    from narlab.model import run

    model = Model.init(ModelConfig(latent_dim=8, processor="pgn"), seed=3)
    g = generate_er(GeneratorSpec(n=6, p=0.8, seed=2))
    t = bellman_ford_trace(g).terminated_at
    trace, latents = run(model, g, t)
    assert trace.terminated_at == t
    assert len(latents) == t and latents[0].shape == (6, 8)
    batch_traces, _, batch_latents = rollout(model, [g], [t], "self_rollout")
    assert batch_traces[0].to_json() == trace.to_json()
    assert np.array_equal(batch_latents[0, t - 1], latents[-1])


def test_checkpoint_round_trip_bit_exact(tmp_path):
    cfg = ModelConfig(latent_dim=16, processor="triplet_lite", aggregator="softmax", softmax_temperature=0.01, decay_factor=0.9)
    model = Model.init(cfg, seed=11)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model, metadata={"seed": 11, "train_steps": 0, "task": "bellman_ford"})
    loaded, meta = load_checkpoint(path)
    assert meta["seed"] == 11
    assert loaded.config == cfg
    assert sorted(loaded.params) == sorted(model.params)
    for name in model.params:
        assert np.array_equal(loaded.params[name].data, model.params[name].data)


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"\x00\x01\x02 not a checkpoint")
    with pytest.raises(ModelError):
        load_checkpoint(path)


def test_init_is_deterministic():
    a = Model.init(ModelConfig(latent_dim=16), seed=42)
    b = Model.init(ModelConfig(latent_dim=16), seed=42)
    for name in a.params:
        assert np.array_equal(a.params[name].data, b.params[name].data)
