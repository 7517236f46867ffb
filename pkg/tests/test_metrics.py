"""Metrics: matcher vs brute-force oracle, tolerance boundaries, the
offset rule, drum handling, and score arithmetic."""

import numpy as np
import pytest

from amtkit.metrics import (
    MatchConfig,
    _admissible,
    agnostic_f1,
    instrument_note_onset_f1,
    match_notes,
    multi_f1,
)
from amtkit.notes import Note, default_instrument_map, drum_note

from helpers import max_matching_bruteforce

IMAP = default_instrument_map()


def _note(onset, offset, pitch=60, program=0, drum=False):
    if drum:
        return drum_note(onset, pitch, program)
    return Note(onset, offset, pitch, program)


class TestAdmissibility:
    def test_onset_tolerance_closed_interval(self):
        cfg = MatchConfig()
        ref = _note(1.000, 2.0)
        assert _admissible(ref, _note(1.050, 2.0), cfg, IMAP)
        assert _admissible(ref, _note(0.950, 2.0), cfg, IMAP)
        assert not _admissible(ref, _note(1.051, 2.0), cfg, IMAP)
        assert not _admissible(ref, _note(0.949, 2.0), cfg, IMAP)

    def test_pitch_must_match(self):
        cfg = MatchConfig()
        assert not _admissible(_note(1.0, 2.0, 60), _note(1.0, 2.0, 61), cfg, IMAP)

    def test_drum_and_pitched_never_match(self):
        cfg = MatchConfig()
        assert not _admissible(
            _note(1.0, 2.0, 38), _note(1.0, 2.0, 38, drum=True), cfg, IMAP
        )

    def test_offset_rule_min_50ms(self):
        # Reference duration 0.2 s: 20% is 0.04 < 0.05, so the floor wins.
        cfg = MatchConfig(offset_enabled=True)
        ref = _note(1.0, 1.2)
        assert _admissible(ref, _note(1.0, 1.25), cfg, IMAP)
        assert not _admissible(ref, _note(1.0, 1.2501), cfg, IMAP)

    def test_offset_rule_20_percent(self):
        # Reference duration 1 s: tolerance is 0.2 s.
        cfg = MatchConfig(offset_enabled=True)
        ref = _note(1.0, 2.0)
        assert _admissible(ref, _note(1.0, 2.2), cfg, IMAP)
        assert not _admissible(ref, _note(1.0, 2.21), cfg, IMAP)
        # 30% off on a 1 s note fails offset but passes onset-only.
        assert not _admissible(ref, _note(1.0, 2.3), cfg, IMAP)
        assert _admissible(ref, _note(1.0, 2.3), MatchConfig(), IMAP)

    def test_drum_offsets_never_scored(self):
        cfg = MatchConfig(offset_enabled=True)
        a = _note(1.0, None, 38, drum=True)
        b = _note(1.02, None, 38, drum=True)
        assert _admissible(a, b, cfg, IMAP)

    def test_instrument_group_requirement(self):
        cfg = MatchConfig(require_instrument_group=True)
        # Programs 0 and 5 are both piano-group: acceptable confusion.
        assert _admissible(_note(1.0, 2.0, 60, 0), _note(1.0, 2.0, 60, 5), cfg, IMAP)
        # Piano vs guitar: not acceptable.
        assert not _admissible(
            _note(1.0, 2.0, 60, 0), _note(1.0, 2.0, 60, 24), cfg, IMAP
        )
        # Without the requirement any program matches.
        assert _admissible(
            _note(1.0, 2.0, 60, 0), _note(1.0, 2.0, 60, 24), MatchConfig(), IMAP
        )


class TestMatcherAgainstOracle:
    @pytest.mark.parametrize("family", ["onset", "offset", "group"])
    def test_random_instances(self, family):
        rng = np.random.default_rng(hash(family) % (2**32))
        cfg = {
            "onset": MatchConfig(),
            "offset": MatchConfig(offset_enabled=True),
            "group": MatchConfig(offset_enabled=True, require_instrument_group=True),
        }[family]
        for trial in range(200):
            n_ref = int(rng.integers(0, 8))
            n_est = int(rng.integers(0, 8))
            # Narrow ranges force dense, ambiguous admissibility graphs.
            def mk(n):
                out = []
                for _ in range(n):
                    onset = float(rng.uniform(0, 0.3))
                    drum = rng.random() < 0.25
                    pitch = int(rng.integers(60, 63))
                    program = int(rng.choice([0, 5, 24, 33]))
                    if drum:
                        out.append(drum_note(onset, pitch, program))
                    else:
                        out.append(Note(onset, onset + float(rng.uniform(0.05, 0.4)),
                                        pitch, program))
                return out
            ref, est = mk(n_ref), mk(n_est)
            pairs = match_notes(ref, est, cfg, IMAP)
            adjacency = [
                [j for j, e in enumerate(est) if _admissible(r, e, cfg, IMAP)]
                for r in ref
            ]
            oracle = max_matching_bruteforce(adjacency, len(est))
            assert len(pairs) == oracle, f"{family} trial {trial}"
            # The matching itself must be valid: admissible and injective.
            assert len({j for _i, j in pairs}) == len(pairs)
            assert len({i for i, _j in pairs}) == len(pairs)
            for i, j in pairs:
                assert _admissible(ref[i], est[j], cfg, IMAP)

    def test_chain_case_requires_augmenting_paths(self):
        # Greedy matching fails this: ref0 can take est0 or est1, ref1 only
        # est0. Maximum matching must give both.
        ref = [_note(1.00, 2.0), _note(1.04, 2.0)]
        est = [_note(1.01, 2.0), _note(1.05, 2.0)]
        cfg = MatchConfig(onset_tolerance_s=0.02)
        pairs = match_notes(ref, est, cfg, IMAP)
        assert len(pairs) == 2


class TestScores:
    def test_perfect_match(self):
        notes = [_note(0.1, 0.5), _note(1.0, 1.5, 64, 33)]
        result = multi_f1(notes, list(notes))
        assert result.precision == result.recall == result.f1 == 1.0

    def test_empty_estimate(self):
        result = multi_f1([_note(0.1, 0.5)], [])
        assert result.precision == 0.0 and result.recall == 0.0 and result.f1 == 0.0

    def test_empty_reference(self):
        result = multi_f1([], [_note(0.1, 0.5)])
        assert result.f1 == 0.0

    def test_f1_arithmetic(self):
        # 1 of 2 ref matched, 1 of 4 est matched: P=0.25, R=0.5, F1=1/3.
        ref = [_note(0.0, 1.0, 60), _note(5.0, 6.0, 61)]
        est = [_note(0.0, 1.0, 60), _note(2.0, 3.0, 70),
               _note(3.0, 4.0, 71), _note(4.0, 5.0, 72)]
        result = multi_f1(ref, est)
        assert result.precision == pytest.approx(0.25)
        assert result.recall == pytest.approx(0.5)
        assert result.f1 == pytest.approx(1 / 3)
        assert result.matched == 1

    def test_removing_unmatched_estimate_never_lowers_precision(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            ref = [_note(float(rng.uniform(0, 0.5)), 1.0, int(rng.integers(60, 63)))
                   for _ in range(int(rng.integers(1, 6)))]
            est = [_note(float(rng.uniform(0, 0.5)), 1.0, int(rng.integers(60, 63)))
                   for _ in range(int(rng.integers(1, 6)))]
            result = multi_f1(ref, est)
            matched_js = {j for _i, j in match_notes(
                ref, est, MatchConfig(offset_enabled=True,
                                      require_instrument_group=True), IMAP)}
            unmatched = [j for j in range(len(est)) if j not in matched_js]
            if not unmatched:
                continue
            est2 = [e for j, e in enumerate(est) if j != unmatched[0]]
            result2 = multi_f1(ref, est2)
            assert result2.precision >= result.precision - 1e-12


class TestInstrumentOnsetScore:
    def test_cross_channel_confusion_unmatched(self):
        ref = [_note(1.0, 2.0, 60, 0)]       # piano
        est = [_note(1.0, 2.0, 60, 24)]      # guitar
        result = instrument_note_onset_f1(ref, est)
        assert result.f1 == 0.0
        assert result.per_instrument["piano"].recall == 0.0
        assert result.per_instrument["guitar"].precision == 0.0

    def test_within_group_confusion_matched(self):
        ref = [_note(1.0, 2.0, 60, 0)]
        est = [_note(1.0, 2.0, 60, 7)]       # still piano group
        result = instrument_note_onset_f1(ref, est)
        assert result.f1 == 1.0

    def test_offsets_ignored(self):
        ref = [_note(1.0, 5.0)]
        est = [_note(1.0, 1.1)]
        assert instrument_note_onset_f1(ref, est).f1 == 1.0

    def test_micro_equals_per_channel_aggregate(self):
        rng = np.random.default_rng(3)
        ref, est = [], []
        for _ in range(60):
            program = int(rng.choice([0, 24, 33, 48]))
            onset = float(rng.uniform(0, 5))
            ref.append(_note(onset, onset + 1, int(rng.integers(55, 70)), program))
            est.append(_note(onset + float(rng.uniform(-0.08, 0.08)), onset + 1,
                             int(rng.integers(55, 70)), program))
        result = instrument_note_onset_f1(ref, est)
        total = sum(r.matched for r in result.per_instrument.values())
        assert result.matched == total

    def test_macro_is_mean_of_channel_f1(self):
        ref = [_note(1.0, 2.0, 60, 0), _note(1.0, 2.0, 40, 33)]
        est = [_note(1.0, 2.0, 60, 0), _note(9.0, 9.5, 40, 33)]
        result = instrument_note_onset_f1(ref, est)
        per = result.per_instrument
        assert result.macro_f1 == pytest.approx(
            (per["piano"].f1 + per["bass"].f1) / 2
        )

    def test_unmapped_programs_bucket_together(self):
        ref = [_note(1.0, 2.0, 60, 97)]
        est = [_note(1.0, 2.0, 60, 110)]
        result = instrument_note_onset_f1(ref, est)
        assert "unmapped" in result.per_instrument
        assert result.per_instrument["unmapped"].f1 == 1.0


class TestAgnosticScore:
    def test_programs_ignored(self):
        ref = [_note(1.0, 2.0, 60, 0)]
        est = [_note(1.0, 2.0, 60, 81)]
        onset, offset = agnostic_f1(ref, est)
        assert onset.f1 == 1.0 and offset.f1 == 1.0

    def test_drums_excluded(self):
        ref = [_note(1.0, 2.0, 60), _note(1.0, None, 38, drum=True)]
        est = [_note(1.0, 2.0, 60)]
        onset, offset = agnostic_f1(ref, est)
        assert onset.n_ref == 1 and onset.f1 == 1.0
        assert offset.n_ref == 1

    def test_offset_view_stricter(self):
        ref = [_note(1.0, 2.0, 60)]
        est = [_note(1.0, 2.5, 60)]  # onset fine, offset off by 0.5 > 0.2
        onset, offset = agnostic_f1(ref, est)
        assert onset.f1 == 1.0
        assert offset.f1 == 0.0


class TestMultiScore:
    def test_drums_scored_without_offsets(self):
        ref = [drum_note(1.0, 38)]
        est = [drum_note(1.04, 38)]
        result = multi_f1(ref, est)
        assert result.f1 == 1.0

    def test_pitched_needs_offset(self):
        ref = [_note(1.0, 2.0, 60)]
        est = [_note(1.0, 3.0, 60)]
        assert multi_f1(ref, est).f1 == 0.0

    def test_per_channel_report(self):
        ref = [_note(1.0, 2.0, 60, 0), drum_note(1.0, 38)]
        est = [_note(1.0, 2.0, 60, 0), drum_note(1.0, 38)]
        result = multi_f1(ref, est)
        assert result.per_instrument["piano"].f1 == 1.0
        assert result.per_instrument["drums"].f1 == 1.0
        assert result.macro_f1 == pytest.approx(1.0)

    def test_mirst500_tolerance_override(self):
        ref = [_note(1.0, 2.0, 60, 100)]
        est = [_note(1.08, 2.0, 60, 100)]
        assert multi_f1(ref, est).f1 == 0.0
        assert multi_f1(ref, est, onset_tolerance_s=0.1).f1 == 1.0
