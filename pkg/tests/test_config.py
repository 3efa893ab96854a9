import json

import pytest

from recontext.config import echo_config, normalize_config, validate_config
from recontext.errors import ConfigError


def minimal_raw(tmp_path):
    return {
        "mock": True,
        "workdir": str(tmp_path / "out"),
        "products": [
            {"product_id": "p1", "title": "Chair", "category": "chair",
             "images": [str(tmp_path / "img.png")]}
        ],
    }


def write_config(tmp_path, raw):
    path = tmp_path / "run.cfg"
    path.write_text(json.dumps(raw), "utf-8")
    return path


class TestValidation:
    def test_minimal_config_resolves_defaults(self, tmp_path):
        config, warnings = validate_config(write_config(tmp_path, minimal_raw(tmp_path)))
        assert config["assemble"]["ratio_pos"] == 2
        assert config["assemble"]["ratio_neg"] == 1
        assert config["filter"]["iou_threshold"] == 0.85
        assert config["rank"]["top_n"] == 4
        assert config["augment"]["n_frames"] == 8
        assert not warnings

    def test_unknown_key_named(self, tmp_path):
        raw = minimal_raw(tmp_path)
        raw["fooo"] = 1
        with pytest.raises(ConfigError, match="fooo"):
            validate_config(write_config(tmp_path, raw))

    def test_unknown_nested_key_named(self, tmp_path):
        raw = minimal_raw(tmp_path)
        raw["rank"] = {"top_nn": 3}
        with pytest.raises(ConfigError, match="rank.top_nn"):
            validate_config(write_config(tmp_path, raw))

    def test_missing_requirements_listed_together(self, tmp_path):
        path = write_config(tmp_path, {})
        with pytest.raises(ConfigError) as err:
            validate_config(path)
        message = str(err.value)
        assert "products" in message
        assert "endpoints" in message

    def test_mock_with_endpoints_warns(self, tmp_path):
        raw = minimal_raw(tmp_path)
        raw["endpoints"] = {"base_url": "http://example.test"}
        config, warnings = validate_config(write_config(tmp_path, raw))
        assert config["mock"] is True
        assert any("ignored" in w for w in warnings)

    def test_product_entry_validation(self, tmp_path):
        raw = minimal_raw(tmp_path)
        raw["products"][0].pop("title")
        raw["products"][0]["extra"] = 1
        with pytest.raises(ConfigError) as err:
            validate_config(write_config(tmp_path, raw))
        message = str(err.value)
        assert "title" in message and "extra" in message

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            validate_config(tmp_path / "absent.cfg")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("{not json", "utf-8")
        with pytest.raises(ConfigError):
            validate_config(path)


class TestEcho:
    def test_echo_is_idempotent(self, tmp_path):
        config, _ = validate_config(write_config(tmp_path, minimal_raw(tmp_path)))
        echoed = echo_config(config)
        config2, _ = normalize_config(json.loads(echoed))
        assert echo_config(config2) == echoed

    def test_echo_contains_resolved_defaults(self, tmp_path):
        config, _ = validate_config(write_config(tmp_path, minimal_raw(tmp_path)))
        echoed = json.loads(echo_config(config))
        assert echoed["filter"]["iou_threshold"] == 0.85
        assert echoed["rank"]["top_n"] == 4
