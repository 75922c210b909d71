import pytest

from provgraph.config import (
    ExperimentMode,
    MetricKind,
    PipelineConfig,
    RunConfig,
    dump_config,
    load_config,
    parse_config_text,
)
from provgraph.errors import ConfigError


def test_defaults():
    cfg = RunConfig()
    assert cfg.pipeline.detector.max_keypoints == 2000
    assert cfg.pipeline.detector.hessian_threshold == 100
    assert cfg.pipeline.matching.nndr_threshold == 0.8
    assert cfg.pipeline.gcm.tolerance_px == 5


def test_parse_sections():
    cfg = parse_config_text("""
[run]
metric = GcmCount
experiment_mode = WithDistractors
threads = 3

[detector]
max_keypoints = 500

[gcm]
literal_top2 = true
""")
    assert cfg.metric is MetricKind.GCM_COUNT
    assert cfg.experiment_mode is ExperimentMode.WITH_DISTRACTORS
    assert cfg.threads == 3
    assert cfg.pipeline.detector.max_keypoints == 500
    assert cfg.pipeline.gcm.literal_top2 is True


def test_dump_round_trip():
    cfg = parse_config_text("[matching]\nnndr_threshold = 0.7\n", {"run.metric": "Mse"})
    assert parse_config_text(dump_config(cfg)) == cfg


@pytest.mark.parametrize("text", [
    "[detector]\nmax_keypoints = many\n",
    "[detector]\nbogus = 1\n",
    "[nowhere]\nx = 1\n",
    "[run]\nmetric = Cosine\n",
    "[run]\nthreads = 0\n",
    "[matching]\nnndr_threshold = 1.5\n",
    "[detector]\ndescriptor_length = 50\n",
    "not an ini file",
])
def test_invalid(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_fingerprint_ignores_output_and_threads():
    a = parse_config_text("[run]\noutput_dir = a\nthreads = 1\n")
    b = parse_config_text("[run]\noutput_dir = b\nthreads = 4\n")
    c = parse_config_text("[gcm]\ntolerance_px = 6\n")
    assert a.fingerprint() == b.fingerprint() != c.fingerprint()
    assert len(a.fingerprint()) == 16


def test_pipeline_fingerprint_stable():
    assert PipelineConfig().fingerprint() == PipelineConfig().fingerprint()


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


def test_metric_parse_case_insensitive():
    assert MetricKind.parse("mutualinformation") is MetricKind.MUTUAL_INFORMATION
    assert MetricKind.MSE.is_pixel_metric and not MetricKind.GCM_COUNT.is_pixel_metric
