"""End-to-end smoke tests for the Python bindings."""

import struct

import numpy as np
import pytest

import synkpar as sk


def test_pool_lifecycle():
    with sk.Pool(workers=2) as pool:
        assert pool.world_size == 2
        assert pool.alive
    assert not pool.alive


def test_scatter_gather_round_trip():
    data = np.arange(30, dtype=np.float64).reshape(10, 3)
    with sk.Pool(workers=4) as pool:
        var = sk.replicate(pool, np.zeros((1, 3)))
        var.scatter(data)
        shards = [var.get(r).shape[0] for r in range(4)]
        assert shards == [3, 3, 2, 2]  # first (n mod w) shards get the extra row
        np.testing.assert_array_equal(var.gather(), data)


def test_all_reduce_matches_numpy():
    rng = np.random.default_rng(7)
    values = [rng.standard_normal(16) for _ in range(4)]
    with sk.Pool(workers=4) as pool:
        var = sk.replicate(pool, np.zeros(16))
        for r, v in enumerate(values):
            var.set(r, v)
        var.all_reduce("mean")
        assert var.coherent
        np.testing.assert_allclose(var.get(0), np.mean(values, axis=0), rtol=0, atol=1e-12)


def test_python_kernel_column_sum():
    data = np.arange(24, dtype=np.float64).reshape(8, 3)

    def column_sum(inputs, ctx):
        return [inputs[0].sum(axis=0)]

    with sk.Pool(workers=3) as pool:
        f = sk.make_py_function(pool, "column_sum", column_sum, ["scatter"], ["sum"])
        sk.distribute(pool)
        (out,) = f.call([data])
        np.testing.assert_allclose(out, data.sum(axis=0), rtol=0, atol=1e-12)
        # Slicing must not change the answer.
        (sliced,) = f.call([data], num_slices=3)
        np.testing.assert_allclose(sliced, out, rtol=0, atol=1e-12)
        # And the serial path agrees.
        (serial,) = f.call_serial([data])
        np.testing.assert_allclose(out, serial, rtol=0, atol=1e-12)


def test_python_kernel_update_delta():
    data = np.array([[1.0], [2.0], [3.0], [4.0]])

    def shard_total(inputs, ctx):
        return [np.float64(inputs[0].sum()).reshape(()), inputs[0].sum(axis=0)]

    with sk.Pool(workers=2) as pool:
        acc = sk.replicate(pool, np.zeros(1))
        f = sk.make_py_function(
            pool, "shard_total", shard_total, ["scatter"], ["sum"], updates=[(acc, "add")]
        )
        sk.distribute(pool)
        (total,) = f.call([data])
        assert total == pytest.approx(10.0)
        # Each rank accumulated only its own shard: [1+2, 3+4].
        assert acc.get(0)[0] == pytest.approx(3.0)
        assert acc.get(1)[0] == pytest.approx(7.0)


def test_shared_input_and_indexes():
    with sk.Pool(workers=2) as pool:
        arr = sk.SharedInput.from_array(np.arange(12, dtype=np.float64).reshape(6, 2))

        def first_col_sum(inputs, ctx):
            return [inputs[0][:, :1].sum(axis=0)]

        f = sk.make_py_function(pool, "first_col", first_col_sum, ["scatter"], ["sum"])
        sk.distribute(pool)
        (full,) = f.call([arr])
        assert full[0] == pytest.approx(np.arange(0, 12, 2).sum())
        (ranged,) = f.call([arr], indexes=(0, 3))  # rows 0..2
        assert ranged[0] == pytest.approx(0.0 + 2.0 + 4.0)
        (picked,) = f.call([arr], indexes=[5, 0])
        assert picked[0] == pytest.approx(10.0 + 0.0)


def test_tensor_file_round_trip(tmp_path):
    path = str(tmp_path / "t.synk")
    data = np.linspace(-1, 1, 12, dtype=np.float64).reshape(3, 4)
    sk.save_tensor(path, data)
    with open(path, "rb") as fh:
        blob = fh.read()
    assert blob[:4] == b"SYNK"
    assert blob[4] == 1  # version
    assert blob[5] == 2  # float64
    assert blob[6] == 2  # rank
    extents = struct.unpack_from("<QQ", blob, 8)
    assert extents == (3, 4)
    np.testing.assert_array_equal(sk.load_tensor(path), data)


def test_errors_map_to_python():
    with sk.Pool(workers=2) as pool:
        var = sk.replicate(pool, np.zeros(2))
        with pytest.raises(sk.ArgumentError):
            var.get(9)
        with pytest.raises(sk.Error):
            var.all_reduce("gather")  # gather is not a reduction
    with pytest.raises(sk.LifecycleError):
        var.all_reduce("sum")  # pool already shut down


def test_trainer_loss_decreases():
    cfg = sk.MlpConfig(in_dim=4, width=8, out_dim=2, layers=2, seed=1)
    x, y = sk.mlp_make_dataset(64, cfg, seed=9)
    with sk.Pool(workers=2) as pool:
        block = sk.ParamBlock.create(pool, sk.mlp_init_params(cfg))
        f = sk.mlp_grad_function(pool, block)
        sk.distribute(pool)
        trainer = sk.Trainer(pool, block, sk.AdamRule(), lr=1e-2, verify_coherence=True)
        losses = [trainer.train_step(f, [x, y]) for _ in range(30)]
        assert losses[-1] < 0.5 * losses[0]
        assert block.params.coherent
        assert trainer.step_count == 30


def test_bench_report_shape():
    report = sk.run_bench(workers=[1, 2], steps=2, batch=8, width=8, layers=2,
                          in_dim=4, out_dim=2, seed=3)
    assert [run["workers"] for run in report["runs"]] == [1, 2]
    for run in report["runs"]:
        for key in ("total_s", "function_s", "shuffle_s", "straggler_s", "allreduce_s",
                    "steps_per_s", "rows_per_s", "speedup_vs_1", "speedup_vs_2"):
            assert key in run
    assert report["config"]["batch_mode"] == "scaled"
