import numpy as np
import pytest

from recontext.backends.base import BackendRequest
from recontext.backends.mock import MockBackend
from recontext.errors import ConfigError, TrainerError, ValidationError
from recontext.filtering import cosine_similarity
from recontext.models import JobStatus, Mask, TrainingDatasetSpec

from conftest import make_rect_image, rect_mask


@pytest.fixture
def mock() -> MockBackend:
    return MockBackend(out_size=(48, 48))


class TestGenerateImage:
    def test_same_prompt_and_seed_bit_identical(self, mock):
        assert np.array_equal(mock.generate_image("a chair", 1), mock.generate_image("a chair", 1))

    def test_different_seeds_differ(self, mock):
        assert not np.array_equal(mock.generate_image("a chair", 1), mock.generate_image("a chair", 2))

    def test_different_prompts_differ(self, mock):
        assert not np.array_equal(mock.generate_image("a chair", 1), mock.generate_image("a table", 1))

    def test_empty_prompt_rejected(self, mock):
        with pytest.raises(ValidationError):
            mock.generate_image("", 1)

    def test_configured_output_size(self):
        small = MockBackend(out_size=(16, 24))
        assert small.generate_image("x", 0).shape == (16, 24, 3)


class TestOutpaintInpaint:
    def test_outpaint_all_ones_mask_is_identity(self, mock):
        image = make_rect_image()
        mask = Mask(np.ones(image.shape[:2], dtype=bool))
        assert np.array_equal(mock.outpaint(image, mask, "beach", 3), image)

    def test_outpaint_all_zeros_regenerates_fully(self, mock):
        image = make_rect_image()
        mask = Mask(np.zeros(image.shape[:2], dtype=bool))
        out = mock.outpaint(image, mask, "beach", 3)
        assert out.shape == image.shape
        assert not np.array_equal(out, image)

    def test_outpaint_half_mask_regions(self, mock):
        # Foreground half must be bit-equal to the input; background half must
        # equal the mock's own full regeneration for the same (prompt, seed).
        image = make_rect_image()
        bits = np.zeros(image.shape[:2], dtype=bool)
        bits[:, : image.shape[1] // 2] = True
        mask = Mask(bits)
        out = mock.outpaint(image, mask, "beach", 3)
        full = mock.outpaint(image, Mask(np.zeros_like(bits)), "beach", 3)
        assert np.array_equal(out[mask.bits], image[mask.bits])
        assert np.array_equal(out[~mask.bits], full[~mask.bits])

    def test_inpaint_mirrors_outpaint(self, mock):
        image = make_rect_image()
        zeros = Mask(np.zeros(image.shape[:2], dtype=bool))
        assert np.array_equal(mock.inpaint(image, zeros, "vase", 3), image)
        ones = Mask(np.ones(image.shape[:2], dtype=bool))
        full = mock.inpaint(image, ones, "vase", 3)
        assert full.shape == image.shape
        assert not np.array_equal(full, image)

    def test_inpaint_rectangle_preserves_outside(self, mock):
        image = make_rect_image()
        mask = rect_mask()
        out = mock.inpaint(image, mask, "vase", 5)
        assert np.array_equal(out[~mask.bits], image[~mask.bits])

    def test_dimension_mismatch_rejected(self, mock):
        with pytest.raises(ValidationError):
            mock.outpaint(make_rect_image(), Mask(np.ones((10, 10), dtype=bool)), "x", 1)


class TestNovelViews:
    def test_single_frame_is_the_input(self, mock):
        image = make_rect_image()
        frames = mock.generate_novel_views(image, 9, 1)
        assert len(frames) == 1
        assert np.array_equal(frames[0], image)

    def test_fixed_seed_repeatable(self, mock):
        image = make_rect_image()
        first = mock.generate_novel_views(image, 4, 4)
        second = mock.generate_novel_views(image, 4, 4)
        assert all(np.array_equal(a, b) for a, b in zip(first, second))

    def test_different_seeds_share_anchor_only(self, mock):
        image = make_rect_image()
        a = mock.generate_novel_views(image, 1, 4)
        b = mock.generate_novel_views(image, 2, 4)
        assert np.array_equal(a[0], b[0])
        assert any(not np.array_equal(x, y) for x, y in zip(a[1:], b[1:]))

    def test_zero_frames_rejected(self, mock):
        with pytest.raises(ValidationError):
            mock.generate_novel_views(make_rect_image(), 1, 0)

    def test_frames_keep_input_dimensions(self, mock):
        image = make_rect_image(height=20, width=36)
        for frame in mock.generate_novel_views(image, 5, 3):
            assert frame.shape == image.shape


class TestSegment:
    def test_recovers_rectangle_exactly(self, mock):
        rect = (12, 8, 30, 40)
        image = make_rect_image(rect=rect)
        assert mock.segment(image) == rect_mask(rect=rect)

    def test_uniform_image_gives_empty_mask(self, mock):
        image = np.full((32, 32, 3), 180, dtype=np.uint8)
        assert mock.segment(image).foreground_count == 0

    def test_mask_dimensions_match_input(self, mock):
        image = make_rect_image(height=21, width=33)
        mask = mock.segment(image)
        assert (mask.height, mask.width) == (21, 33)


class TestCaption:
    def test_deterministic(self, mock):
        image = make_rect_image()
        assert mock.caption(image, "Describe").text == mock.caption(image, "Describe").text

    def test_mandatory_attribute_keys_present(self, mock):
        record = mock.caption(make_rect_image(), "Describe")
        for key in ("color", "position", "lighting"):
            assert key in record.attributes

    def test_distinct_images_distinct_captions(self, mock):
        a = mock.caption(make_rect_image(rect_color=(200, 30, 30)), "Describe")
        b = mock.caption(make_rect_image(rect_color=(30, 200, 30)), "Describe")
        assert a.text != b.text

    def test_category_instruction_answers_category(self, mock):
        record = mock.caption(make_rect_image(), "What type of product is this? category please")
        assert record.attributes.get("category")

    def test_empty_instruction_rejected(self, mock):
        with pytest.raises(ValidationError):
            mock.caption(make_rect_image(), "")


class TestEmbeddings:
    def test_unit_norm_within_tolerance(self, mock):
        for model in ("clip_image", "dino"):
            vec = mock.embed_image(make_rect_image(), model)
            assert abs(np.linalg.norm(vec.values) - 1.0) <= 1e-6
        text = mock.embed_text("a chair")
        assert abs(np.linalg.norm(text.values) - 1.0) <= 1e-6

    def test_identical_input_identical_vector(self, mock):
        a = mock.embed_image(make_rect_image(), "clip_image")
        b = mock.embed_image(make_rect_image(), "clip_image")
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(mock.embed_text("x").values, mock.embed_text("x").values)

    def test_unknown_model_rejected(self, mock):
        with pytest.raises(ConfigError):
            mock.embed_image(make_rect_image(), "resnet")
        with pytest.raises(ConfigError):
            mock.embed_text("x", "dino")

    def test_black_image_still_embeds(self, mock):
        vec = mock.embed_image(np.zeros((48, 48, 3), dtype=np.uint8), "clip_image")
        assert abs(np.linalg.norm(vec.values) - 1.0) <= 1e-6

    @pytest.mark.parametrize("model", ["clip_image", "dino"])
    def test_cosine_decreases_monotonically_with_noise(self, mock, model):
        # Locality: embed(x) vs embed(x + a*n) for one fixed +/-1 noise
        # pattern and 100 increasing amplitudes. Pixel values stay inside
        # [5, 250] so no clipping perturbs the ramp.
        rng = np.random.default_rng(7)
        base = rng.integers(105, 151, (48, 48, 3)).astype(np.int16)
        noise = rng.choice([-1, 1], size=(48, 48))[:, :, None]
        anchor = mock.embed_image(base.astype(np.uint8), model)
        cosines = []
        for amplitude in range(1, 101):
            noisy = (base + amplitude * noise).astype(np.uint8)
            cosines.append(cosine_similarity(anchor, mock.embed_image(noisy, model)))
        diffs = np.diff(cosines)
        assert np.all(diffs < 0)


class TestGenerateText:
    def test_templated_and_deterministic(self, mock):
        a = mock.generate_text("chair", 5, 1)
        assert a == mock.generate_text("chair", 5, 1)
        assert len(a) == 5
        assert all("chair" in t for t in a)
        assert len(set(a)) == 5

    def test_wraps_beyond_template_count(self, mock):
        texts = mock.generate_text("lamp", 25, 3)
        assert len(texts) == 25
        assert len(set(texts)) == 25


class TestTrainerBoundary:
    def spec(self, token="zxv"):
        return TrainingDatasetSpec(
            product_id="p1", token=token,
            positive_asset_ids=["a", "b"], negative_asset_ids=["n"],
        )

    def test_submit_then_done_immediately(self, mock):
        job = mock.submit_training_job(self.spec(), [("a", "cap")])
        status, model_ref = mock.poll_job(job)
        assert status is JobStatus.DONE
        assert model_ref

    def test_model_ref_is_spec_digest(self, mock):
        job1 = mock.submit_training_job(self.spec(), [])
        job2 = mock.submit_training_job(self.spec(), [])
        assert mock.poll_job(job1)[1] == mock.poll_job(job2)[1]

    def test_token_changes_model_ref(self, mock):
        ref_a = mock.poll_job(mock.submit_training_job(self.spec("zxv"), []))[1]
        ref_b = mock.poll_job(mock.submit_training_job(self.spec("qpt"), []))[1]
        assert ref_a != ref_b

    def test_sample_count(self, mock):
        job = mock.submit_training_job(self.spec(), [])
        _, model_ref = mock.poll_job(job)
        samples = mock.sample_from_model(model_ref, "a zxv chair", 1, 3)
        assert len(samples) == 3
        assert all(s.shape == (48, 48, 3) for s in samples)

    def test_failed_job_surfaces_message(self):
        mock = MockBackend(fail_tokens={"zxv"})
        job = mock.submit_training_job(self.spec("zxv"), [])
        with pytest.raises(TrainerError, match="zxv"):
            mock.poll_job(job)


def test_backend_request_requires_seed_for_generative_ops():
    with pytest.raises(ValidationError):
        BackendRequest(backend_name="mock", operation="generate_image", payload={})
    BackendRequest(backend_name="mock", operation="segment", payload={})  # fine without seed
