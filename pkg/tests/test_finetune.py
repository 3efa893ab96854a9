import math

import pytest

from recontext.errors import (
    SweepError,
    TokenExhaustionError,
    TrainerError,
    ValidationError,
)
from recontext.finetune import (
    assemble_dataset,
    emit_ablation_grid,
    rewrite_caption,
    select_token,
    token_sweep,
)
from recontext.models import CaptionRecord, ImageAsset, ProductRecord, Provenance, Role, TrainingDatasetSpec


def product(title="Acme Vortex Chair", metadata=None):
    return ProductRecord(
        product_id="p1", title=title, category="chair",
        metadata=metadata or {}, base_asset_ids=["a"],
    )


def asset(asset_id, role=Role.BASE, caption_id=None, prompt=None):
    return ImageAsset(
        asset_id=asset_id, product_id="p1", role=role, image_ref="", width=8, height=8,
        caption_id=caption_id, prompt=prompt,
        provenance=Provenance() if role is Role.BASE else Provenance("mock", {}, 1),
    )


def caption(asset_id, text):
    return CaptionRecord(
        caption_id=f"c-{asset_id}", asset_id=asset_id, text=text,
        attributes={"color": "x", "position": "y", "lighting": "z"},
    )


class TestSelectToken:
    def test_title_substring_excluded(self):
        # 'vortex' collides with the title, so 'zxq' is the only admissible pick.
        assert select_token(product(), ["vortex", "zxq"], seed=0) == "zxq"
        assert select_token(product(), ["vortex", "zxq"], seed=123) == "zxq"

    def test_metadata_substring_excluded(self):
        p = product(title="Plain Chair", metadata={"brand": "Zephyr Quax"})
        assert select_token(p, ["quax", "jvk"], seed=0) == "jvk"

    def test_no_conflict_returns_first_shuffled(self):
        import random

        tokens = ["aaa", "bbb", "ccc"]
        expected = list(tokens)
        random.Random(9).shuffle(expected)
        assert select_token(product(title="Plain Chair"), tokens, seed=9) == expected[0]

    def test_exhaustion(self):
        with pytest.raises(TokenExhaustionError):
            select_token(product(title="abc def"), ["abc", "def", "c d"], seed=0)

    def test_empty_candidates_rejected(self):
        with pytest.raises(ValidationError):
            select_token(product(), [], seed=0)

    def test_deterministic_for_seed(self):
        tokens = [f"t{i}" for i in range(20)]
        p = product(title="Plain Chair")
        assert select_token(p, tokens, seed=4) == select_token(p, tokens, seed=4)


class TestTokenSweep:
    def test_argmax_of_scores(self):
        scores = {"zxq": 2.5, "qvx": 1.0}
        best, recorded = token_sweep(
            product(title="Plain Chair"), ["zxq", "qvx"], 2, lambda t: scores[t], seed=1
        )
        assert best == "zxq"
        assert recorded == scores

    def test_sweep_size_one_skips_comparison(self):
        calls = []

        def evaluate(token):
            calls.append(token)
            return 1.0

        best, recorded = token_sweep(product(title="Plain Chair"), ["aa", "bb"], 1, evaluate, seed=1)
        assert len(calls) == 1
        assert best == calls[0]

    def test_trainer_failure_scores_neg_inf(self):
        def evaluate(token):
            if token == "qvx":
                raise TrainerError("boom")
            return 0.5

        best, recorded = token_sweep(
            product(title="Plain Chair"), ["zxq", "qvx"], 2, evaluate, seed=1
        )
        assert best == "zxq"
        assert recorded["qvx"] == -math.inf

    def test_all_failures_raise_sweep_error(self):
        def evaluate(token):
            raise TrainerError(f"{token} failed")

        with pytest.raises(SweepError) as err:
            token_sweep(product(title="Plain Chair"), ["zxq", "qvx"], 2, evaluate, seed=1)
        assert set(err.value.failures) == {"zxq", "qvx"}

    def test_tie_breaks_by_candidate_order(self):
        best, recorded = token_sweep(
            product(title="Plain Chair"), ["aa", "bb", "cc"], 3, lambda t: 1.0, seed=2
        )
        candidates = list(recorded)
        assert best == candidates[0]


class TestAssembleDataset:
    def inputs(self):
        positives = [asset("a1", caption_id="c-a1"), asset("a2", caption_id="c-a2"),
                     asset("a3", caption_id="c-a3"), asset("a4", caption_id="c-a4")]
        negatives = [asset("n1", role=Role.NEGATIVE, prompt="a red chair"),
                     asset("n2", role=Role.NEGATIVE, prompt="a blue chair")]
        captions = {
            "a1": caption("a1", "a wooden chair by a window"),
            "a2": caption("a2", "a chair on a rug"),
            "a3": caption("a3", "a chair near a desk"),
            "a4": caption("a4", "a chair in a corner"),
        }
        return positives, negatives, captions

    def test_caption_rewrite_prepends_token_binding(self):
        positives, negatives, captions = self.inputs()
        assembled = assemble_dataset(product(), "zxq", positives, negatives, captions)
        by_asset = dict(assembled.captions)
        assert by_asset["a1"] == "a zxq chair, a wooden chair by a window"

    def test_negative_captions_bit_unchanged(self):
        positives, negatives, captions = self.inputs()
        assembled = assemble_dataset(product(), "zxq", positives, negatives, captions)
        by_asset = dict(assembled.captions)
        assert by_asset["n1"] == "a red chair"
        assert by_asset["n2"] == "a blue chair"

    def test_uncaptioned_positive_rejected(self):
        positives, negatives, captions = self.inputs()
        del captions["a3"]
        positives[2].caption_id = None
        with pytest.raises(ValidationError, match="a3"):
            assemble_dataset(product(), "zxq", positives, negatives, captions)

    def test_ratio_violation_rejected(self):
        positives, negatives, captions = self.inputs()
        extra = asset("n3", role=Role.NEGATIVE, prompt="x")
        with pytest.raises(ValidationError):
            assemble_dataset(product(), "zxq", positives, negatives + [extra], captions)

    def test_spec_fields(self):
        positives, negatives, captions = self.inputs()
        assembled = assemble_dataset(
            product(), "zxq", positives, negatives, captions,
            lora_rank=4, train_steps=700, learning_rate=2e-4,
        )
        spec = assembled.spec
        assert spec.positive_asset_ids == ["a1", "a2", "a3", "a4"]
        assert spec.negative_asset_ids == ["n1", "n2"]
        assert (spec.lora_rank, spec.train_steps, spec.learning_rate) == (4, 700, 2e-4)


class TestAblationGrid:
    def base_spec(self):
        return TrainingDatasetSpec(
            product_id="p1", token="zxv",
            positive_asset_ids=["a", "b"], negative_asset_ids=["n"],
        )

    def test_two_by_two_grid(self):
        grid = emit_ablation_grid(self.base_spec(), ranks=[1, 64], steps=[700, 1800])
        assert len(grid) == 4
        assert {(s.lora_rank, s.train_steps) for s in grid} == {
            (1, 700), (1, 1800), (64, 700), (64, 1800)
        }

    def test_single_cell(self):
        grid = emit_ablation_grid(self.base_spec(), ranks=[1], steps=[700])
        assert len(grid) == 1

    def test_other_fields_shared(self):
        base = self.base_spec()
        for spec in emit_ablation_grid(base, ranks=[1, 64], steps=[700]):
            assert spec.product_id == base.product_id
            assert spec.token == base.token
            assert spec.positive_asset_ids == base.positive_asset_ids
            assert spec.learning_rate == base.learning_rate

    def test_empty_axis_rejected(self):
        with pytest.raises(ValidationError):
            emit_ablation_grid(self.base_spec(), ranks=[], steps=[700])


def test_rewrite_caption_format():
    assert rewrite_caption("zxq", "chair", "a wooden chair") == "a zxq chair, a wooden chair"
