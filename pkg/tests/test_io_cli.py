import io
import struct

import numpy as np
import pytest

from compgcf.cli import main
from compgcf.config import ConfigError, TrainConfig, parse_config, parse_config_text
from compgcf.data import (DatasetError, InteractionDataset, load_dataset, load_dataset_dir,
                          planted_communities, save_dataset_dir)
from compgcf.embedding import MetaCodebook, SparseAssignment, compose, parameter_count
from compgcf.io import (CheckpointError, load_checkpoint, load_matrix, read_matrix, save_checkpoint,
                        save_matrix, write_matrix)


def random_assignment(rng, n, c, t):
    index = np.argsort(rng.random((n, c)), axis=1)[:, :t]
    return SparseAssignment(c, index, rng.random((n, t)))


class TestMatrixFormat:
    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_round_trip_bit_exact(self, dtype, tmp_path):
        m = np.random.default_rng(0).standard_normal((7, 3)).astype(dtype)
        m[0, 0] = -0.0
        save_matrix(tmp_path / "m.bin", m)
        got = load_matrix(tmp_path / "m.bin")
        assert got.dtype == dtype and got.tobytes() == m.tobytes()

    def test_header_layout(self):
        buf = io.BytesIO()
        write_matrix(buf, np.ones((2, 3), dtype=np.float32))
        raw = buf.getvalue()
        assert raw[:4] == b"LEGC"
        assert struct.unpack("<IIIB", raw[4:17]) == (1, 2, 3, 32)
        assert len(raw) == 17 + 6 * 4

    def test_bad_magic(self):
        buf = io.BytesIO()
        write_matrix(buf, np.ones((1, 1)))
        raw = bytearray(buf.getvalue())
        raw[:4] = b"XXXX"
        with pytest.raises(CheckpointError, match="magic"):
            read_matrix(io.BytesIO(bytes(raw)))

    def test_bad_version_and_truncation(self):
        buf = io.BytesIO()
        write_matrix(buf, np.ones((2, 2)))
        raw = bytearray(buf.getvalue())
        bumped = raw.copy()
        bumped[4] = 9
        with pytest.raises(CheckpointError, match="version"):
            read_matrix(io.BytesIO(bytes(bumped)))
        with pytest.raises(CheckpointError, match="truncated"):
            read_matrix(io.BytesIO(bytes(raw[:-3])))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        cb = MetaCodebook(rng.standard_normal((6, 4)).astype(np.float32))
        s = random_assignment(rng, 30, 6, 3)
        m, v = rng.standard_normal((6, 4)), rng.random((6, 4))
        save_checkpoint(tmp_path / "c.bin", cb, s, (17, m, v))
        ck = load_checkpoint(tmp_path / "c.bin")
        assert ck.codebook.weights.tobytes() == cb.weights.tobytes()
        np.testing.assert_array_equal(ck.assignment.index, s.index)
        assert ck.assignment.weight.tobytes() == s.weight.tobytes()
        assert ck.adam[0] == 17
        assert ck.adam[1].tobytes() == m.tobytes() and ck.adam[2].tobytes() == v.tobytes()

    def test_zero_weights_survive(self, tmp_path):
        s = SparseAssignment(4, [[2, 0], [1, 3]], [[0.9, 0.0], [0.4, 0.6]])
        save_checkpoint(tmp_path / "c.bin", MetaCodebook(np.zeros((4, 2))), s)
        ck = load_checkpoint(tmp_path / "c.bin")
        assert ck.assignment == s and ck.adam is None
        assert list(ck.assignment.anchor) == [2, 3]

    def test_missing_and_corrupt(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "nope.bin")
        (tmp_path / "junk.bin").write_bytes(b"JUNK" + bytes(40))
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(tmp_path / "junk.bin")


class TestDataset:
    def test_line_format(self, tmp_path):
        (tmp_path / "train.txt").write_text("0 5 7\n3\n\n1 2 2\n")
        (tmp_path / "test.txt").write_text("2 1\n")
        data = load_dataset(tmp_path / "train.txt", tmp_path / "test.txt")
        assert (data.num_users, data.num_items) == (4, 8)
        assert data.train.tolist() == [[0, 5], [0, 7], [1, 2]]
        assert data.test.tolist() == [[2, 1]]

    def test_bad_token_names_line(self, tmp_path):
        (tmp_path / "train.txt").write_text("0 1\n1 x\n")
        (tmp_path / "test.txt").write_text("")
        with pytest.raises(DatasetError, match=":2:"):
            load_dataset_dir(tmp_path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError):
            load_dataset_dir(tmp_path)

    def test_round_trip(self, tmp_path):
        data = planted_communities(30, 20, 2, p_in=0.4, p_out=0.05, seed=0)
        save_dataset_dir(data, tmp_path)
        again = load_dataset_dir(tmp_path)
        assert again == data
        save_dataset_dir(again, tmp_path / "b")
        assert (tmp_path / "b" / "train.txt").read_bytes() == (tmp_path / "train.txt").read_bytes()


class TestConfig:
    def test_empty_is_defaults(self, tmp_path):
        (tmp_path / "c.txt").write_text("")
        cfg = parse_config(tmp_path / "c.txt")
        assert cfg == TrainConfig()
        assert (cfg.d, cfg.c, cfg.t, cfg.L, cfg.lr, cfg.l2, cfg.w_star, cfg.m) == \
            (128, 500, 2, 3, 1e-3, 1e-3, 0.5, 1)
        assert (cfg.negatives_per_positive, cfg.rcond, cfg.balance_factor, cfg.seed) == (5, 1e-10, 1.05, 42)

    def test_table_configuration(self):
        cfg = parse_config_text("c=500\nt=2\nd=128\n")
        assert (cfg.c, cfg.t, cfg.d) == (500, 2, 128)

    def test_comments_and_lambda(self):
        cfg = parse_config_text("# header\nlambda = 0.01  # decay\nlog_wall_time=false\n")
        assert cfg.l2 == 0.01 and cfg.log_wall_time is False

    def test_t_exceeds_c(self):
        with pytest.raises(ConfigError, match="t exceeds c"):
            parse_config_text("t=9\nc=4")

    @pytest.mark.parametrize("text,key", [("bogus=1", "bogus"), ("d=abc", "d"), ("lambda=-1", "lambda")])
    def test_errors_name_key(self, text, key):
        with pytest.raises(ConfigError, match=f"^{key}:"):
            parse_config_text(text)

    def test_text_round_trip(self):
        cfg = TrainConfig(d=7, c=9, l2=0.5, init_method="random", log_wall_time=False)
        assert parse_config_text(cfg.to_text()) == cfg


@pytest.fixture
def run_dir(tmp_path):
    data = planted_communities(40, 40, 2, p_in=0.4, p_out=0.02, seed=0)
    save_dataset_dir(data, tmp_path / "data")
    (tmp_path / "cfg.txt").write_text("d=8\nc=4\nt=2\nL=2\nlr=0.01\nepochs_pretrain_max=3\n"
                                      "epochs_main_max=2\nscalar_width=64\nseed=1\n")
    return tmp_path, data


class TestCli:
    def test_partition(self, run_dir):
        tmp, data = run_dir
        assert main(["partition", "--data", str(tmp / "data"), "--c", "4", "--out", str(tmp / "p.txt")]) == 0
        labels = [int(x) for x in (tmp / "p.txt").read_text().split("\n") if x]
        assert len(labels) == data.num_entities and set(labels) == {0, 1, 2, 3}

    def test_train_evaluate_export(self, run_dir, capsys):
        tmp, data = run_dir
        out = tmp / "run"
        assert main(["train", "--data", str(tmp / "data"), "--config", str(tmp / "cfg.txt"),
                     "--out", str(out), "--quiet"]) == 0
        for name in ("manifest.json", "config.txt", "metrics.tsv", "checkpoint.bin", "report.tsv"):
            assert (out / name).is_file()
        assert len((out / "metrics.tsv").read_text().splitlines()) == 1 + 5
        capsys.readouterr()

        assert main(["evaluate", "--checkpoint", str(out / "checkpoint.bin"), "--data", str(tmp / "data"),
                     "--per-user", str(tmp / "users.tsv")]) == 0
        head, row = capsys.readouterr().out.splitlines()
        assert head.split("\t") == ["ndcg@10", "recall@10", "ndcg@20", "recall@20", "params"]
        ck = load_checkpoint(out / "checkpoint.bin")
        assert int(row.split("\t")[-1]) == ck.assignment.nnz + 4 * 8
        # evaluate reproduces the report written at the end of training
        assert row == (out / "report.tsv").read_text().splitlines()[1]
        assert (tmp / "users.tsv").read_text().startswith("user\tndcg@10")

        assert main(["export", "--checkpoint", str(out / "checkpoint.bin"), "--out", str(tmp / "e.bin")]) == 0
        exported = load_matrix(tmp / "e.bin")
        assert exported.shape == (data.num_entities, 8)
        assert exported.tobytes() == compose(ck.assignment, ck.codebook).tobytes()

    def test_train_zero_epochs(self, run_dir):
        tmp, data = run_dir
        (tmp / "zero.txt").write_text("d=8\nc=4\nepochs_pretrain_max=0\nepochs_main_max=0\n")
        assert main(["train", "--data", str(tmp / "data"), "--config", str(tmp / "zero.txt"),
                     "--out", str(tmp / "z"), "--quiet"]) == 0
        ck = load_checkpoint(tmp / "z" / "checkpoint.bin")
        assert ck.codebook.weights.dtype == np.float32
        assert ck.assignment.nnz == 2 * data.num_entities
        assert ck.adam[0] == 0
        assert (tmp / "z" / "metrics.tsv").read_text().splitlines() == [
            "epoch\tphase\tloss\tndcg@10\trecall@10\tndcg@20\trecall@20\ts_nnz\twall_seconds"]

    def test_errors_exit_2(self, run_dir, capsys):
        tmp, _ = run_dir
        assert main(["evaluate", "--checkpoint", str(tmp / "missing.bin"), "--data", str(tmp / "data")]) == 2
        (tmp / "bad.txt").write_text("t=9\nc=4\n")
        assert main(["train", "--data", str(tmp / "data"), "--config", str(tmp / "bad.txt"),
                     "--out", str(tmp / "x")]) == 2
        assert "t exceeds c" in capsys.readouterr().err

    def test_param_count_gowalla_shape(self):
        # 29,858 users + 40,981 items, t=2, c=500, d=128
        n = 29_858 + 40_981
        s = SparseAssignment(500, np.stack([np.arange(n) % 500, (np.arange(n) + 1) % 500], axis=1),
                             np.full((n, 2), 0.5))
        assert parameter_count(s, MetaCodebook(np.zeros((500, 128), dtype=np.float32))) == 205_678
