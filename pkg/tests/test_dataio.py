"""VAGF round trips, clip construction protocol, synthetic data, manifests."""

import numpy as np
import pytest

from vagnet import dataio, metrics, model
from vagnet.errors import FormatError, InputError, NumericError

from helpers import chi2_uniform_pvalue


def seq(rng, frames=50, dim=8, label=0, tau=None, fps=10.0, group="vid-0"):
    return dataio.FeatureSequence(data=rng.normal(size=(frames, dim)),
                                  fps=fps, label=label, tau=tau, group_id=group)


class TestFeatureSequence:
    def test_rejects_nan(self):
        data = np.zeros((4, 3))
        data[1, 2] = np.nan
        with pytest.raises(NumericError):
            dataio.FeatureSequence(data=data, fps=10, label=0)

    def test_rejects_positive_without_tau(self):
        with pytest.raises(InputError):
            dataio.FeatureSequence(data=np.zeros((4, 3)), fps=10, label=1)

    def test_rejects_negative_with_tau(self):
        with pytest.raises(InputError):
            dataio.FeatureSequence(data=np.zeros((4, 3)), fps=10, label=0, tau=2)

    def test_rejects_tau_out_of_range(self):
        with pytest.raises(InputError):
            dataio.FeatureSequence(data=np.zeros((4, 3)), fps=10, label=1, tau=4)

    def test_casts_to_float32(self):
        s = dataio.FeatureSequence(data=np.zeros((2, 2), dtype=np.float64),
                                   fps=10, label=0)
        assert s.data.dtype == np.float32
        assert (s.T, s.D) == (2, 2)


class TestVagfRoundTrip:
    def test_bit_identical_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        original = seq(rng, frames=50, dim=768, label=1, tau=41, group="dash-042")
        path = tmp_path / "clip.vagf"
        dataio.write_features(original, path)
        back = dataio.read_features(path)
        assert np.array_equal(back.data, original.data)
        assert back.fps == original.fps
        assert back.label == original.label
        assert back.tau == original.tau
        assert back.group_id == original.group_id

    def test_tau_absent_roundtrip(self, tmp_path):
        original = seq(np.random.default_rng(2), label=0)
        dataio.write_features(original, tmp_path / "n.vagf")
        assert dataio.read_features(tmp_path / "n.vagf").tau is None

    def test_unicode_group_id(self, tmp_path):
        original = seq(np.random.default_rng(3), group="clip-événement")
        dataio.write_features(original, tmp_path / "u.vagf")
        assert dataio.read_features(tmp_path / "u.vagf").group_id == original.group_id

    def test_file_size_is_header_plus_payload(self, tmp_path):
        # 27 fixed header bytes + group id + 4*T*D payload
        for frames, dim, group in ((50, 768, "abc"), (7, 3, ""), (2, 2, "xy")):
            s = seq(np.random.default_rng(4), frames=frames, dim=dim, group=group)
            path = tmp_path / f"{frames}x{dim}.vagf"
            dataio.write_features(s, path)
            assert path.stat().st_size == 27 + len(group) + 4 * frames * dim

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.vagf"
        path.write_bytes(b"NOPE" + bytes(64))
        with pytest.raises(FormatError, match="bad magic.*byte 0"):
            dataio.read_features(path)

    def test_truncation_names_offset(self, tmp_path):
        s = seq(np.random.default_rng(5), frames=4, dim=4, group="g")
        path = tmp_path / "t.vagf"
        dataio.write_features(s, path)
        full = path.read_bytes()
        assert len(full) == 27 + 1 + 64
        for cut in (10, 27, 40):
            path.write_bytes(full[:cut])
            with pytest.raises(FormatError, match=f"byte {cut}"):
                dataio.read_features(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        s = seq(np.random.default_rng(6), frames=2, dim=2)
        path = tmp_path / "x.vagf"
        dataio.write_features(s, path)
        path.write_bytes(path.read_bytes() + b"!!")
        with pytest.raises(FormatError, match="trailing"):
            dataio.read_features(path)

    def test_unsupported_version(self, tmp_path):
        s = seq(np.random.default_rng(7), frames=2, dim=2)
        path = tmp_path / "v.vagf"
        dataio.write_features(s, path)
        raw = bytearray(path.read_bytes())
        raw[4:6] = (99).to_bytes(2, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version 99"):
            dataio.read_features(path)


class TestMakeClips:
    def stream(self, frames=100, onset_group="src"):
        rng = np.random.default_rng(8)
        return dataio.FeatureSequence(data=rng.normal(size=(frames, 6)), fps=10.0,
                                      label=0, group_id=onset_group)

    def test_onset_lands_in_final_two_seconds(self):
        stream = self.stream(100)
        pos, neg = dataio.make_clips(stream, onset=80, seed=0)
        assert pos.T == 50
        assert 30 <= pos.tau <= 49
        assert pos.label == 1
        assert neg is None  # needs 100 pre-onset frames for a negative
        assert pos.group_id == stream.group_id

    def test_positive_frames_come_from_stream(self):
        stream = self.stream(120)
        pos, _ = dataio.make_clips(stream, onset=90, seed=3)
        start = 90 - pos.tau
        assert np.array_equal(pos.data, stream.data[start:start + 50])

    def test_no_negative_when_onset_early(self):
        stream = self.stream(50)
        pos, neg = dataio.make_clips(stream, onset=49, seed=1)
        assert neg is None
        assert pos.T == 50 and pos.tau == 49

    def test_negative_strictly_before_margin(self):
        stream = self.stream(250)
        pos, neg = dataio.make_clips(stream, onset=220, seed=2)
        assert neg is not None
        assert neg.label == 0 and neg.tau is None and neg.T == 50
        # latest admissible window: ends strictly before onset - clip_len
        assert np.array_equal(neg.data, stream.data[120:170])
        assert neg.group_id == stream.group_id

    def test_short_stream_rejected(self):
        with pytest.raises(InputError):
            dataio.make_clips(self.stream(30), onset=10, seed=0)

    def test_onset_out_of_range_rejected(self):
        with pytest.raises(InputError):
            dataio.make_clips(self.stream(100), onset=100, seed=0)

    def test_onset_too_early_for_protocol_rejected(self):
        with pytest.raises(InputError):
            dataio.make_clips(self.stream(100), onset=10, seed=0)

    def test_onset_position_uniform_over_final_two_seconds(self):
        stream = self.stream(200)
        rng = np.random.default_rng(9)
        taus = [dataio.make_clips(stream, onset=150, seed=rng)[0].tau
                for _ in range(1000)]
        counts = np.bincount(taus, minlength=50)[30:50]
        assert counts.sum() == 1000
        assert chi2_uniform_pvalue(counts) > 0.01


class TestSynthGenerate:
    def test_balanced_and_finite(self):
        clips = dataio.synth_generate(dataio.SyntheticSpec(n_clips=4, seed=1))
        assert len(clips) == 4
        assert sum(c.label for c in clips) == 2
        for c in clips:
            assert (c.T, c.D) == (50, 32)
            assert np.isfinite(c.data).all()

    def test_deterministic_in_seed(self):
        a = dataio.synth_generate(dataio.SyntheticSpec(n_clips=6, seed=5))
        b = dataio.synth_generate(dataio.SyntheticSpec(n_clips=6, seed=5))
        for ca, cb in zip(a, b):
            assert np.array_equal(ca.data, cb.data)
            assert (ca.label, ca.tau, ca.group_id) == (cb.label, cb.tau, cb.group_id)

    def test_pairs_share_group(self):
        clips = dataio.synth_generate(dataio.SyntheticSpec(n_clips=8, seed=2))
        for i in range(0, 8, 2):
            assert clips[i].group_id == clips[i + 1].group_id
            assert clips[i].label == 1 and clips[i + 1].label == 0

    def test_onset_in_final_two_seconds(self):
        clips = dataio.synth_generate(dataio.SyntheticSpec(n_clips=40, seed=3))
        for c in clips:
            if c.label == 1:
                assert 30 <= c.tau <= 49

    def test_positive_final_norm_dominates(self):
        clips = dataio.synth_generate(dataio.SyntheticSpec(seed=0))
        pos = [c for c in clips if c.label == 1]
        neg = [c for c in clips if c.label == 0]
        wins = sum(np.linalg.norm(p.data[-1]) > np.linalg.norm(n.data[-1])
                   for p, n in zip(pos, neg))
        assert wins / len(pos) > 0.95

    def test_drift_projection_separates_perfectly(self):
        # oracle classifier: threshold the final-frame projection on the drift
        # direction; with the default spec this separates classes at AP 1.0
        spec = dataio.SyntheticSpec(seed=0)
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        rng.normal(size=spec.dim)  # base draw
        direction = rng.normal(size=spec.dim)
        direction /= np.linalg.norm(direction)
        clips = dataio.synth_generate(spec)
        scores = [float(c.data[-1] @ direction) for c in clips]
        labels = [c.label for c in clips]
        lo = max(s for s, l in zip(scores, labels) if l == 0)
        hi = min(s for s, l in zip(scores, labels) if l == 1)
        assert lo < hi  # perfectly separable
        shifted = 1 / (1 + np.exp(-np.asarray(scores)))
        assert metrics.average_precision(shifted, labels) == 1.0

    def test_zero_drift_is_classless(self):
        spec = dataio.SyntheticSpec(n_clips=100, drift=0.0, seed=4)
        clips = dataio.synth_generate(spec)
        pos = np.stack([c.data[-1] for c in clips if c.label == 1])
        neg = np.stack([c.data[-1] for c in clips if c.label == 0])
        # same law: means within a few standard errors
        se = spec.noise / np.sqrt(len(pos))
        assert np.abs(pos.mean(0) - neg.mean(0)).max() < 6 * se

    def test_odd_count_rejected(self):
        with pytest.raises(InputError):
            dataio.SyntheticSpec(n_clips=5)


class TestManifest:
    def write_dataset(self, tmp_path, n=3):
        rng = np.random.default_rng(10)
        entries = []
        for i in range(n):
            label = i % 2
            s = seq(rng, frames=10, dim=4, label=label,
                    tau=8 if label else None, group=f"g{i}")
            p = tmp_path / f"c{i}.vagf"
            dataio.write_features(s, p)
            entries.append({"path": str(p), "label": label,
                            "tau": 8 if label else None, "group_id": f"g{i}",
                            "split": "train"})
        return entries

    def test_roundtrip_preserves_order(self, tmp_path):
        entries = self.write_dataset(tmp_path)
        mpath = tmp_path / "m.jsonl"
        dataio.write_manifest(mpath, entries)
        manifest = dataio.load_manifest(mpath)
        assert len(manifest.entries) == 3
        assert [e.group_id for e in manifest.entries] == ["g0", "g1", "g2"]
        clips = manifest.load_split("train")
        assert [c.group_id for c in clips] == ["g0", "g1", "g2"]

    def test_label_tau_inconsistency_rejected(self, tmp_path):
        entries = self.write_dataset(tmp_path)
        entries[0]["tau"] = 5  # label 0 with tau set
        mpath = tmp_path / "m.jsonl"
        dataio.write_manifest(mpath, entries)
        with pytest.raises(InputError, match="label=0 entry must not set tau"):
            dataio.load_manifest(mpath)

    def test_missing_file_named(self, tmp_path):
        entries = self.write_dataset(tmp_path)
        entries[1]["path"] = str(tmp_path / "absent.vagf")
        mpath = tmp_path / "m.jsonl"
        dataio.write_manifest(mpath, entries)
        with pytest.raises(InputError, match="absent.vagf"):
            dataio.load_manifest(mpath)

    def test_all_problems_reported_at_once(self, tmp_path):
        entries = self.write_dataset(tmp_path)
        entries[0]["tau"] = 5
        entries[1]["path"] = str(tmp_path / "gone.vagf")
        mpath = tmp_path / "m.jsonl"
        dataio.write_manifest(mpath, entries)
        with pytest.raises(InputError) as err:
            dataio.load_manifest(mpath)
        assert "tau" in str(err.value) and "gone.vagf" in str(err.value)

    def test_duplicate_paths_rejected(self, tmp_path):
        entries = self.write_dataset(tmp_path)
        entries[2]["path"] = entries[0]["path"]
        entries[2]["label"] = entries[0]["label"]
        entries[2]["tau"] = entries[0]["tau"]
        mpath = tmp_path / "m.jsonl"
        dataio.write_manifest(mpath, entries)
        with pytest.raises(InputError, match="duplicate"):
            dataio.load_manifest(mpath)

    def test_entry_file_metadata_cross_checked(self, tmp_path):
        entries = self.write_dataset(tmp_path)
        entries[0]["group_id"] = "other"
        mpath = tmp_path / "m.jsonl"
        dataio.write_manifest(mpath, entries)
        manifest = dataio.load_manifest(mpath)
        with pytest.raises(InputError, match="disagrees"):
            manifest.entries[0].load()

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(InputError, match="not found"):
            dataio.load_manifest(tmp_path / "none.jsonl")


class TestSynthToDir:
    def test_writes_loadable_dataset(self, tmp_path):
        spec = dataio.SyntheticSpec(n_clips=20, seed=6)
        mpath = dataio.synth_to_dir(spec, tmp_path / "data", test_fraction=0.2)
        manifest = dataio.load_manifest(mpath)
        assert len(manifest.entries) == 20
        train = manifest.split("train")
        test = manifest.split("test")
        assert len(train) + len(test) == 20
        assert len(test) == 4  # 2 of 10 groups
        train_groups = {e.group_id for e in train}
        test_groups = {e.group_id for e in test}
        assert not train_groups & test_groups

    def test_relative_paths_survive_directory_move(self, tmp_path):
        spec = dataio.SyntheticSpec(n_clips=4, seed=7)
        mpath = dataio.synth_to_dir(spec, tmp_path / "a")
        moved = tmp_path / "b"
        (tmp_path / "a").rename(moved)
        manifest = dataio.load_manifest(moved / "manifest.jsonl")
        assert len(manifest.load_split()) == 4


class TestCheckpoint:
    def test_roundtrip_bit_identical(self, tmp_path):
        cfg = model.ModelConfig(d_in=8, d_model=8, layers=1, heads=2, lookback=2,
                                neighbors=2, d_hidden=8)
        params = model.init_params(cfg, seed=11)
        path = tmp_path / "w.vagw"
        dataio.write_checkpoint(path, cfg, params)
        cfg2, params2 = dataio.read_checkpoint(path)
        assert cfg2 == cfg
        for (na, ta), (nb, tb) in zip(params.named_tensors(), params2.named_tensors()):
            assert na == nb
            assert np.array_equal(ta.data, tb.data)

    def test_write_is_deterministic(self, tmp_path):
        cfg = model.ModelConfig(d_in=4, d_model=4, layers=1, heads=2, lookback=1,
                                neighbors=1, d_hidden=4)
        params = model.init_params(cfg, seed=12)
        dataio.write_checkpoint(tmp_path / "a.vagw", cfg, params)
        dataio.write_checkpoint(tmp_path / "b.vagw", cfg, params)
        assert (tmp_path / "a.vagw").read_bytes() == (tmp_path / "b.vagw").read_bytes()

    def test_corrupt_checkpoint_rejected(self, tmp_path):
        path = tmp_path / "bad.vagw"
        path.write_bytes(b"VAGW" + bytes(3))
        with pytest.raises(FormatError):
            dataio.read_checkpoint(path)
