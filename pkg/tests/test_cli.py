import json
import math

import pytest

from ldlab.cli import main
from ldlab.config import ConfigError, load_config, shipped_config

SHIPPED = ["bounds_pareto", "conditions_heavy_mixing", "conditions_poisson",
           "conditions_two_point_mixing", "corollary_shifted", "indices_discretized_pareto",
           "indices_pareto", "indices_step_pareto", "lemma42_pareto", "oracle_suite",
           "pareto_t31_exact", "pareto_t31_exact_T1", "pareto_t31_mc", "step_pareto_t31",
           "surplus_t32"]

MINIMAL = '''schema = "ldlab.config/1"
seed = 3

[severity]
family = "discretized"
h = 1.0

[severity.inner]
family = "pareto"
alpha = 2.0

[scan]
theorem = "T31"
t = [50.0]
gamma = 1.0
'''


@pytest.mark.parametrize("name", SHIPPED)
def test_shipped_configs_validate(name):
    cfg = load_config(shipped_config(name))
    assert cfg["schema"] == "ldlab.config/1" and cfg["name"] == name


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_error_line_anchoring(tmp_path):
    bad = MINIMAL.replace("gamma = 1.0", "gamma = -1.0")
    with pytest.raises(ConfigError) as ei:
        load_config(write(tmp_path, bad))
    assert ei.value.line == bad.splitlines().index("gamma = -1.0") + 1
    assert str(ei.value).startswith(str(tmp_path / "c.toml") + f":{ei.value.line}:")
    bad = MINIMAL.replace("t = [50.0]", "t = [50.0, 20.0]")
    with pytest.raises(ConfigError, match="increasing") as ei:
        load_config(write(tmp_path, bad))
    assert ei.value.line == bad.splitlines().index("t = [50.0, 20.0]") + 1
    bad = MINIMAL.replace('family = "pareto"', 'family = "lognormal"')
    with pytest.raises(ConfigError, match="severity"):
        load_config(write(tmp_path, bad))
    with pytest.raises(ConfigError, match=":2:"):
        load_config(write(tmp_path, 'schema = "ldlab.config/1"\n[severity\n'))
    with pytest.raises(ConfigError, match="n_samples"):
        load_config(write(tmp_path, MINIMAL.replace("seed = 3", 'seed = 3\nmode = "mc"\n'
                                                               "n_samples = 100")))


def test_run_pareto_t31_exact(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", "--config", str(shipped_config("pareto_t31_exact")),
                 "--out", str(out)]) == 0
    rows = (out / "ratios.csv").read_text().splitlines()
    assert len(rows) > 1
    man = json.loads((out / "manifest.json").read_text())
    assert man["all_passed"] and all(v["verdict"] == "PASS" for v in man["verdicts"])
    assert man["schema"] == "ldlab.manifest/1" and "ratios.csv" in man["outputs"]
    # defaults are echoed
    assert man["config"]["n_samples"] == 1_000_000 and man["config"]["scan"]["c"] == 0.0
    first = (out / "ratios.csv").read_bytes()
    assert main(["run", "--config", str(shipped_config("pareto_t31_exact")),
                 "--out", str(out)]) == 0
    assert (out / "ratios.csv").read_bytes() == first
    # the manifest alone reproduces the outputs
    out2 = tmp_path / "o2"
    assert main(["run", "--config", str(out / "manifest.json"), "--out", str(out2)]) == 0
    assert (out2 / "ratios.csv").read_bytes() == first


def test_gamma_below_nu_is_rejected(tmp_path, capsys):
    code = main(["scan", "--config", str(shipped_config("surplus_t32")), "--gamma", "0.4",
                 "--out", str(tmp_path)])
    err = capsys.readouterr().err
    assert code != 0 and "nu" in err and "surplus_t32.toml:" in err


def test_scan_mc_twice_identical(tmp_path):
    p = write(tmp_path, MINIMAL.replace("seed = 3", 'seed = 3\nmode = "mc"\n'
                                                   "n_samples = 20000"))
    for d in ("a", "b"):
        main(["scan", "--config", str(p), "--mode", "mc", "--seed", "7",
              "--out", str(tmp_path / d)])
    for f in ("ratios.csv", "ratios.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["seeds"]["seed"] == 7 and sum(man["seeds"]["chunk_plan"]) == 20000


def test_panjer_kmax(tmp_path):
    assert main(["panjer", "--config", str(shipped_config("pareto_t31_exact")), "--t", "50",
                 "--kmax", "500", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "compound_t50.csv").read_text().splitlines()
    assert text[0].startswith("# {") and text[1] == "index,mass" and len(text) == 503


def test_panjer_oracle_suite_and_env_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("LDLAB_OUTPUT_DIR", str(tmp_path))
    assert main(["run", "--config", str(shipped_config("oracle_suite"))]) == 0
    rep = json.loads((tmp_path / "oracle_suite" / "panjer.json").read_text())
    assert len(rep["cases"]) >= 5 and max(c["max_abs_diff"] for c in rep["cases"]) <= 1e-10


def test_stage_outputs(tmp_path):
    assert main(["run", "--config", str(shipped_config("conditions_poisson")),
                 "--out", str(tmp_path / "c")]) == 0
    assert json.loads((tmp_path / "c" / "conditions.json").read_text())["schema"] == \
        "ldlab.conditions/1"
    assert main(["run", "--config", str(shipped_config("conditions_heavy_mixing")),
                 "--out", str(tmp_path / "h")]) == 1
    assert main(["indices", "--config", str(shipped_config("indices_step_pareto")),
                 "--out", str(tmp_path / "i")]) == 0
    ind = json.loads((tmp_path / "i" / "indices.json").read_text())
    assert ind["windows"][0]["estimates"]["L_local"] == pytest.approx(2.0, rel=0.1)
    assert main(["bounds", "--config", str(shipped_config("lemma42_pareto")),
                 "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "bounds.csv").exists()


def test_t1_variant_exits_nonzero(tmp_path):
    assert main(["run", "--config", str(shipped_config("pareto_t31_exact_T1")),
                 "--out", str(tmp_path)]) == 1


def test_verify_subset(tmp_path, capsys):
    assert main(["verify", "--only", "1", "2", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 2 and all("PASS" in line for line in out)
    rep = json.loads((tmp_path / "acceptance.json").read_text())
    assert [c["id"] for c in rep["criteria"]] == [1, 2]


def test_config_without_stages(tmp_path, capsys):
    p = write(tmp_path, MINIMAL.split("[scan]")[0])
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "none of the sections" in capsys.readouterr().err
