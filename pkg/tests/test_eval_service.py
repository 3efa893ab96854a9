import itertools
import threading

import pytest

from recontext.errors import ConflictError, IncompletePanelError, NotFoundError, ValidationError
from recontext.eval_service import (
    EvalService,
    image_verdict,
    protocol_document,
    rater_verdict,
)
from recontext.models import Answer, RatingRecord, TaskStatus

YES8 = ["yes"] * 8


def record(rater_id="r1", answers=None):
    return RatingRecord(
        rating_id=f"rec-{rater_id}", asset_id="a1", rater_id=rater_id,
        answers=answers or YES8,
    )


def service_with_batch(n_assets=5, raters_needed=3, **kwargs) -> EvalService:
    service = EvalService(raters_needed=raters_needed, **kwargs)
    service.create_batch(
        [(f"asset{i}", (f"src{i}",), f"product{i % 2}") for i in range(n_assets)]
    )
    return service


class TestCreateBatch:
    def test_tasks_per_asset(self):
        service = service_with_batch(n_assets=5, raters_needed=3)
        assert service.open_task_count() == 15

    def test_single_rater_batch(self):
        service = service_with_batch(n_assets=5, raters_needed=1)
        assert service.open_task_count() == 5

    def test_empty_asset_id_rejected(self):
        service = EvalService()
        with pytest.raises(ValidationError):
            service.create_batch([("", (), "p")])


class TestFetchNextTask:
    def test_fresh_batch_assigns(self):
        service = service_with_batch()
        task = service.fetch_next_task("r1")
        assert task is not None
        assert task.status is TaskStatus.ASSIGNED
        assert task.assigned_rater == "r1"

    def test_rater_never_gets_same_asset_twice(self):
        service = service_with_batch(n_assets=3)
        seen = []
        while (task := service.fetch_next_task("r1")) is not None:
            seen.append(task.asset_id)
            service.submit_rating(task.task_id, "r1", YES8)
        assert len(seen) == len(set(seen)) == 3

    def test_exhausted_returns_none(self):
        service = service_with_batch(n_assets=1, raters_needed=1)
        task = service.fetch_next_task("r1")
        service.submit_rating(task.task_id, "r1", YES8)
        assert service.fetch_next_task("r1") is None

    def test_empty_rater_id_rejected(self):
        with pytest.raises(ValidationError):
            service_with_batch().fetch_next_task("")

    def test_concurrent_fetches_never_double_assign(self):
        # Two raters hammering fetch concurrently over many trials: every
        # assignment is unique and no task is handed out twice.
        for _ in range(20):
            service = service_with_batch(n_assets=25, raters_needed=2)
            grabbed: list = []
            errors: list = []

            def grab(rater):
                try:
                    while (task := service.fetch_next_task(rater)) is not None:
                        grabbed.append(task.task_id)
                except Exception as exc:  # pragma: no cover
                    errors.append(exc)

            threads = [threading.Thread(target=grab, args=(f"r{i}",)) for i in range(2)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            assert not errors
            assert len(grabbed) == len(set(grabbed)) == 50


class TestSubmitRating:
    def test_accepts_eight_answers(self):
        service = service_with_batch()
        task = service.fetch_next_task("r1")
        rating = service.submit_rating(task.task_id, "r1", YES8)
        assert rating.asset_id == task.asset_id
        assert len(rating.answers) == 8

    def test_seven_answers_rejected(self):
        service = service_with_batch()
        task = service.fetch_next_task("r1")
        with pytest.raises(ValidationError):
            service.submit_rating(task.task_id, "r1", ["yes"] * 7)

    def test_double_submit_conflicts(self):
        service = service_with_batch()
        task = service.fetch_next_task("r1")
        service.submit_rating(task.task_id, "r1", YES8)
        with pytest.raises(ConflictError):
            service.submit_rating(task.task_id, "r1", YES8)

    def test_wrong_rater_rejected(self):
        service = service_with_batch()
        task = service.fetch_next_task("r1")
        with pytest.raises(ValidationError):
            service.submit_rating(task.task_id, "r2", YES8)

    def test_unknown_task(self):
        with pytest.raises(NotFoundError):
            service_with_batch().submit_rating("nope", "r1", YES8)


class TestRaterVerdict:
    def test_all_yes_passes(self):
        assert rater_verdict(record()) is True

    def test_single_maybe_fails(self):
        answers = ["yes"] * 7 + ["maybe"]
        assert rater_verdict(record(answers=answers)) is False

    def test_all_unclear_fails(self):
        assert rater_verdict(record(answers=["unclear"] * 8)) is False


class TestImageVerdict:
    def panel(self, verdicts):
        answers = {True: YES8, False: ["no"] * 8}
        return [record(rater_id=f"r{i}", answers=answers[v]) for i, v in enumerate(verdicts)]

    def test_two_of_three_passes(self):
        assert image_verdict(self.panel([True, True, False])) is True

    def test_one_of_three_fails(self):
        assert image_verdict(self.panel([True, False, False])) is False

    def test_incomplete_panel_rejected(self):
        with pytest.raises(IncompletePanelError):
            image_verdict(self.panel([True, False]))

    def test_duplicate_raters_rejected(self):
        records = self.panel([True, True, True])
        records[1].rater_id = records[0].rater_id
        with pytest.raises(ValidationError):
            image_verdict(records)

    def test_exhaustive_majority_over_all_panels(self):
        for combo in itertools.product([True, False], repeat=3):
            assert image_verdict(self.panel(list(combo))) == (sum(combo) >= 2)


class TestReport:
    def rate_asset(self, service, asset_id, verdicts):
        answers = {True: YES8, False: ["no"] * 8}
        for i, verdict in enumerate(verdicts):
            rater = f"{asset_id}-r{i}"
            while (task := service.fetch_next_task(rater)) is not None:
                if task.asset_id == asset_id:
                    service.submit_rating(task.task_id, rater, answers[verdict])
                    break
                # skip foreign assets by leaving them assigned to a throwaway rater
        return service

    def test_pass_rates(self):
        service = EvalService(raters_needed=3)
        service.create_batch([("a1", (), "P1"), ("a2", (), "P1"), ("a3", (), "P2")])
        answers = {True: YES8, False: ["no"] * 8}
        panels = {"a1": [True, True, False], "a2": [False, False, False], "a3": [False, True, False]}
        for rater_index in range(3):
            rater = f"r{rater_index}"
            while (task := service.fetch_next_task(rater)) is not None:
                service.submit_rating(task.task_id, rater, answers[panels[task.asset_id][rater_index]])
        report = service.report()
        assert report["per_image_pass_rate"] == pytest.approx(1 / 3)
        assert report["per_product_pass_rate"] == pytest.approx(0.5)
        assert report["assets_with_complete_panel"] == 3

    def test_incomplete_panels_excluded(self):
        service = service_with_batch(n_assets=2)
        task = service.fetch_next_task("r1")
        service.submit_rating(task.task_id, "r1", YES8)
        report = service.report()
        assert report["assets_with_complete_panel"] == 0
        assert report["per_image_pass_rate"] == 0.0


class TestPersistence:
    def test_log_appended_and_replayed(self, tmp_path):
        log = tmp_path / "ratings.log"
        service = service_with_batch(n_assets=1, raters_needed=2, rating_log=log)
        for rater in ("r1", "r2"):
            task = service.fetch_next_task(rater)
            service.submit_rating(task.task_id, rater, YES8)
        assert len(log.read_text().splitlines()) == 2

        restored = EvalService(raters_needed=2, rating_log=log)
        assert len(restored.ratings_for("asset0")) == 2
        assert restored.verdict_for("asset0") is True

    def test_replayed_ratings_consume_task_slots(self, tmp_path):
        # A restarted service re-batching the same assets must not allow a
        # fourth rating or re-serve an asset to a rater who already rated it.
        log = tmp_path / "ratings.log"
        service = EvalService(raters_needed=3, rating_log=log)
        service.create_batch([("asset0", ("src",), "P1")])
        for rater in ("r1", "r2", "r3"):
            task = service.fetch_next_task(rater)
            service.submit_rating(task.task_id, rater, YES8)

        restored = EvalService(raters_needed=3, rating_log=log)
        restored.create_batch([("asset0", ("src",), "P1"), ("asset1", ("src",), "P1")])
        assert restored.open_task_count() == 3  # only the new asset's panel
        assert restored.fetch_next_task("r1").asset_id == "asset1"
        task = restored.fetch_next_task("r9")
        assert task.asset_id == "asset1"
        assert restored.report()["assets_with_complete_panel"] == 1

    def test_partial_panel_resumes_after_restart(self, tmp_path):
        log = tmp_path / "ratings.log"
        service = EvalService(raters_needed=3, rating_log=log)
        service.create_batch([("asset0", ("src",), "P1")])
        task = service.fetch_next_task("r1")
        service.submit_rating(task.task_id, "r1", YES8)

        restored = EvalService(raters_needed=3, rating_log=log)
        restored.create_batch([("asset0", ("src",), "P1")])
        assert restored.open_task_count() == 2
        task = restored.fetch_next_task("r2")
        assert task.asset_id == "asset0"
        restored.submit_rating(task.task_id, "r2", YES8)
        task = restored.fetch_next_task("r3")
        restored.submit_rating(task.task_id, "r3", YES8)
        assert restored.verdict_for("asset0") is True
        assert len(restored.ratings_for("asset0")) == 3


def test_protocol_document_shape():
    doc = protocol_document()
    assert doc["version"]
    assert doc["scale"] == ["yes", "maybe", "no", "unclear"]
    assert len(doc["questions"]) == 8
    assert all(q["id"] and q["text"] for q in doc["questions"])
