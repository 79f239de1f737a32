import numpy as np
import pytest

from wpprop.config import ConfigError, parse_config, plan_from_text
from wpprop.core import get_model

CONFIGS = __import__("pathlib").Path(__file__).resolve().parents[1] / "configs"


def test_minimal_config_gets_defaults():
    plan = plan_from_text("[model]\nkind = free\n")
    assert plan.hbar == 0.05 and plan.times == (0.25, 0.5, 1.0)
    qg, pg = plan.source.grids()
    assert qg.count == 96 and qg.step == pytest.approx(np.sqrt(0.05) / 4)
    assert qg.points.mean() == pytest.approx(0.0, abs=1e-12)
    assert plan.target == plan.source
    assert plan.exact is None and plan.tolerances.l2 == 1e-4
    assert plan.initial.state == "chirped_gaussian" and plan.output_dir is None


def test_partial_target_section_falls_back_to_centred_grid():
    plan = plan_from_text("[target]\nnq = 32\n")
    assert plan.target.nq == 32 and plan.target.np == 64


def test_model_parameters_are_passed_through():
    plan = plan_from_text("[model]\nkind = linear\nfield_strength = 2.5\n")
    assert plan.model_params == {"field_strength": 2.5}
    assert plan.model.gradient(np.array([[0.3]]), np.array([[0.0]]))[0, 0] == pytest.approx(
        get_model("linear", field_strength=2.5).gradient(np.array([[0.3]]), np.array([[0.0]]))[0, 0])


@pytest.mark.parametrize("text,path", [
    ("[run]\nhbar = -0.1\n", "run.hbar"),
    ("[run]\nhbar = abc\n", "run.hbar"),
    ("[run]\ndt = 0\n", "run.dt"),
    ("[run]\ntimes = 0.1\nt_final = 1\n", "run.t_final"),
    ("[model]\nkind = nonsense\n", "model.kind"),
    ("[model]\nkind = free\nomega = 2\n", "model.omega"),
    ("[model]\ndim = 0\n", "model.dim"),
    ("[source]\nnq = 1\n", "source.nq"),
    ("[target]\np_min = 3\np_max = 1\n", "target.p_max"),
    ("[initial]\nstate = plane_wave\n", "initial.state"),
    ("[initial]\namplitude_width = -1\n", "initial.amplitude_width"),
    ("[trajectory]\nq0 = 1, 2\n", "trajectory.q0"),
    ("[points]\nx = 1, 2\ny = 1\n", "points.y"),
    ("[benchmark]\nexact = airy\n", "benchmark.exact"),
    ("[benchmark]\nl2_tol = 0\n", "benchmark.l2_tol"),
    ("[run]\nspeed = 3\n", "run.speed"),
    ("[extras]\na = 1\n", "extras"),
])
def test_invalid_fields_are_named(text, path):
    with pytest.raises(ConfigError) as info:
        plan_from_text(text)
    assert info.value.path == path
    assert str(info.value).startswith(path)


def test_syntax_error_reports_source():
    with pytest.raises(ConfigError) as info:
        plan_from_text("[run\nhbar = 1\n", "bad.ini")
    assert info.value.path == "bad.ini"


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "absent.ini")


def test_shipped_configs_parse():
    free = parse_config(CONFIGS / "free.ini")
    assert free.exact == "free" and free.source.nq == 96 and free.target.nq == 64
    qg, _ = free.source.grids()
    assert qg.step <= np.sqrt(free.hbar) / 4
    assert parse_config(CONFIGS / "linear.ini").model_params == {"field_strength": 1.0}
    pts = parse_config(CONFIGS / "points.ini")
    assert pts.model_kind == "quartic" and pts.points["x"] == (0.0, 0.3)
