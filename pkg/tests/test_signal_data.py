import numpy as np
import pytest

from ecgsr.signal_data import (
    N_CLASSES,
    CaLabel,
    DataError,
    EcgRecording,
    Lcg64,
    LeadId,
    ManifestEntry,
    SyntheticEcgParams,
    load_dataset,
    load_manifest,
    load_recording,
    make_fold_plan,
    synth_ecg,
    window_signal,
    write_manifest,
    write_recording,
)


def rec(samples, fs=500.0, label=CaLabel.Normal, rid="r"):
    return EcgRecording(rid, LeadId.II, fs, np.asarray(samples, dtype=float), label)


def write_rec_file(path, n_header, values, fs=500, lead="II"):
    lines = [f"fs={fs} lead={lead} n={n_header}"] + [str(v) for v in values]
    path.write_text("\n".join(lines) + "\n")


class TestEnums:
    def test_twelve_leads_round_trip(self):
        assert len(LeadId) == 12
        for lead in LeadId:
            assert LeadId.parse(str(lead)) is lead

    def test_nine_labels_in_order(self):
        tokens = ["Normal", "AF", "I-AVB", "LBBB", "RBBB", "PAC", "PVC", "STD", "STE"]
        assert N_CLASSES == 9
        assert [c.token for c in CaLabel] == tokens
        assert [int(c) for c in CaLabel] == list(range(9))
        for t in tokens:
            assert CaLabel.parse(t).token == t

    def test_multi_label_rejected(self):
        with pytest.raises(DataError, match="multi-label"):
            CaLabel.parse("AF;PVC")


class TestRecording:
    def test_validation(self):
        with pytest.raises(DataError):
            rec([])
        with pytest.raises(DataError):
            rec([1.0], fs=0)
        with pytest.raises(DataError):
            rec([1.0, np.inf])

    def test_samples_read_only(self):
        r = rec([1.0, 2.0])
        with pytest.raises(ValueError):
            r.samples[0] = 5.0


class TestManifest:
    def _write(self, tmp_path, rows, header="id,path,lead,fs,label"):
        p = tmp_path / "m.csv"
        p.write_text("\n".join([header] + rows) + "\n")
        return p

    def test_three_rows(self, tmp_path):
        p = self._write(tmp_path, [f"r{i},r{i}.txt,II,500,Normal" for i in range(3)])
        m = load_manifest(p)
        assert len(m) == 3
        assert m.ids == ["r0", "r1", "r2"]
        assert m.entries[0].path == tmp_path / "r0.txt"

    def test_duplicate_id(self, tmp_path):
        p = self._write(tmp_path, ["rec1,a.txt,II,500,AF", "rec1,b.txt,II,500,AF"])
        with pytest.raises(DataError, match="rec1"):
            load_manifest(p)

    def test_unknown_label(self, tmp_path):
        p = self._write(tmp_path, ["x,a.txt,II,500,AFX"])
        with pytest.raises(DataError, match="AFX"):
            load_manifest(p)

    def test_malformed_row_line_number(self, tmp_path):
        p = self._write(tmp_path, ["a,a.txt,II,500,AF", "b,b.txt,II"])
        with pytest.raises(DataError, match=":3:"):
            load_manifest(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_manifest(tmp_path / "nope.csv")

    def test_note_and_round_trip(self, tmp_path):
        entries = [ManifestEntry("a", tmp_path / "a.txt", LeadId.V5, 250.0, CaLabel.STE)]
        write_manifest(tmp_path / "m.csv", entries, note="derived; mode=decimate")
        m = load_manifest(tmp_path / "m.csv")
        assert "mode=decimate" in m.note
        assert m.entries[0] == entries[0]


class TestRecordingFiles:
    def test_declared_count(self, tmp_path):
        p = tmp_path / "r.txt"
        write_rec_file(p, 5000, np.zeros(5000))
        assert load_recording(p, None).samples.size == 5000

    def test_count_mismatch(self, tmp_path):
        p = tmp_path / "r.txt"
        write_rec_file(p, 5000, np.zeros(4999))
        with pytest.raises(DataError, match="5000"):
            load_recording(p, None)

    def test_nan_line_number(self, tmp_path):
        p = tmp_path / "r.txt"
        write_rec_file(p, 3, ["0.1", "NaN", "0.2"])
        with pytest.raises(DataError, match=":3:.*non-finite"):
            load_recording(p, None)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "r.txt"
        p.write_text("hello\n1\n")
        with pytest.raises(DataError, match="header"):
            load_recording(p, None)

    def test_write_read_exact(self, tmp_path):
        r = synth_ecg(SyntheticEcgParams(72, 250, 2, CaLabel.PVC, 0.02), seed=3, rec_id="p")
        write_recording(tmp_path / "p.txt", r)
        entry = ManifestEntry("p", tmp_path / "p.txt", r.lead, r.fs, r.label)
        write_manifest(tmp_path / "m.csv", [entry])
        back = load_dataset(load_manifest(tmp_path / "m.csv"))[0]
        assert back.samples.tobytes() == r.samples.tobytes()
        assert back.label is CaLabel.PVC

    def test_meta_mismatch(self, tmp_path):
        p = tmp_path / "r.txt"
        write_rec_file(p, 2, [0, 1], fs=500)
        with pytest.raises(DataError, match="disagrees"):
            load_recording(p, ManifestEntry("r", p, LeadId.II, 250.0, CaLabel.AF))


class TestWindow:
    def test_center_crop(self):
        x = np.arange(7500.0)
        out = window_signal(rec(x), 10)
        assert out.samples.size == 5000
        np.testing.assert_array_equal(out.samples, x[1250:6250])

    def test_identity(self):
        x = np.random.default_rng(0).standard_normal(250)
        out = window_signal(rec(x, fs=25), 10)
        np.testing.assert_array_equal(out.samples, x)

    def test_pad_tail(self):
        x = np.ones(8 * 500)
        out = window_signal(rec(x), 10, "pad_zero_tail")
        np.testing.assert_array_equal(out.samples[:4000], x)
        np.testing.assert_array_equal(out.samples[4000:], np.zeros(1000))
        assert out.fs == 500

    def test_crop_center_rejects_short(self):
        with pytest.raises(DataError):
            window_signal(rec(np.ones(100)), 10, "crop_center")

    def test_bad_args(self):
        with pytest.raises(DataError):
            window_signal(rec(np.ones(10)), 0)
        with pytest.raises(DataError):
            window_signal(rec(np.ones(10)), 1, "stretch")


class TestFoldPlan:
    def test_lcg_matches_recurrence(self):
        g = Lcg64(42)
        state = (6364136223846793005 * 42 + 1442695040888963407) % 2**64
        for _ in range(5):
            state = (6364136223846793005 * state + 1442695040888963407) % 2**64
            assert g.next_u64() == state

    def test_ten_ids(self):
        plan = make_fold_plan([f"i{k}" for k in range(10)], 10, seed=1)
        assert plan.sizes() == [1] * 10

    def test_hundred_ids(self):
        plan = make_fold_plan(range(100), 10, seed=1)
        assert plan.sizes() == [10] * 10

    def test_deterministic(self):
        ids = [f"r{k}" for k in range(37)]
        a, b = make_fold_plan(ids, 10, 7), make_fold_plan(ids, 10, 7)
        assert repr(sorted(a.assignment.items())) == repr(sorted(b.assignment.items()))
        assert make_fold_plan(ids, 10, 8).assignment != a.assignment

    def test_too_few_ids(self):
        with pytest.raises(DataError):
            make_fold_plan(range(5), 10)

    def test_split_eight_one_one(self):
        plan = make_fold_plan(range(100), 10, 3)
        for k in range(10):
            train, val, test = plan.split(k)
            assert len(train) == 80 and len(val) == 10 and len(test) == 10
            assert set(val) == set(plan.fold((k + 1) % 10))
            assert set(train) | set(val) | set(test) == set(range(100))

    def test_two_folds_share_train_and_validation(self):
        plan = make_fold_plan(range(6), 2, 0)
        train, val, test = plan.split(0)
        assert train == val == plan.fold(1) and test == plan.fold(0)

    def test_stratified_balance(self):
        ids = [f"s{i}" for i in range(90)]
        strata = {rid: i % 9 for i, rid in enumerate(ids)}
        plan = make_fold_plan(ids, 10, 0, strata)
        for k in range(10):
            assert sorted(strata[i] for i in plan.fold(k)) == list(range(9))


class TestSynth:
    def test_exact_beat_periodicity(self):
        r = synth_ecg(SyntheticEcgParams(60, 500, 10, CaLabel.Normal, 0.0), seed=0)
        beats = r.samples.reshape(10, 500)
        for b in beats[1:]:
            np.testing.assert_array_equal(b, beats[0])

    def test_deterministic(self):
        p = SyntheticEcgParams(77, 500, 4, CaLabel.AF, 0.05)
        assert synth_ecg(p, seed=9).samples.tobytes() == synth_ecg(p, seed=9).samples.tobytes()
        assert synth_ecg(p, seed=10).samples.tobytes() != synth_ecg(p, seed=9).samples.tobytes()

    def test_length(self):
        assert synth_ecg(SyntheticEcgParams(60, 250, 10, CaLabel.STD, 0.01), seed=1).samples.size == 2500

    def test_param_validation(self):
        with pytest.raises(DataError):
            SyntheticEcgParams(0, 500, 10)
        with pytest.raises(DataError):
            SyntheticEcgParams(60, 500, 10, noise=-1)
        with pytest.raises(DataError):
            SyntheticEcgParams(60, 1, 0.5)

    def test_classes_differ(self):
        sigs = {c: synth_ecg(SyntheticEcgParams(60, 500, 10, c, 0.0), seed=0).samples for c in CaLabel}
        for a in CaLabel:
            for b in CaLabel:
                if a < b:
                    assert np.max(np.abs(sigs[a] - sigs[b])) > 0.05, (a, b)
