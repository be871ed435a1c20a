import json
import math
from pathlib import Path

import pytest

from slidelab.cli import main
from slidelab.scenario import SchemaError, build_system, load_scenario

BUNDLED = Path(__file__).resolve().parent.parent / "scenarios" / "utkin_filippov.toml"


def write(tmp_path, text):
    p = tmp_path / "scenario.toml"
    p.write_text(text)
    return str(p)


MINIMAL = """
[system]
f = ["0.3 + u^3"]
g = "-0.5 - u"
k = 1
M = 2.0
"""


class TestSchema:
    def test_bundled_scenario_loads(self):
        sc = load_scenario(str(BUNDLED))
        assert sc.run.method == "hysteresis"
        assert sc.run.alpha == 0.05
        assert sc.system.k == 1
        assert sc.out_format == "csv"

    def test_build_system_evaluates(self):
        sys_ = build_system(["0.3 + u^3"], "-0.5 - u", 1, 2.0)
        import numpy as np
        assert sys_.f(np.array([0.0]), 0.0, -0.5)[0] == pytest.approx(0.175)
        assert sys_.g(np.array([0.0]), 0.0, -0.5) == pytest.approx(0.0)

    def test_x_alias_for_scalar_systems(self):
        sys_ = build_system(["x + u"], "-u", 1, 1.0)
        import numpy as np
        assert sys_.f(np.array([0.25]), 0.0, 0.5)[0] == pytest.approx(0.75)

    def test_missing_system_block(self, tmp_path):
        with pytest.raises(SchemaError, match="system"):
            load_scenario(write(tmp_path, "[run]\nmethod = 'utkin'\nT = 1.0\n"))

    def test_component_count_mismatch(self, tmp_path):
        with pytest.raises(SchemaError, match=r"system\.f"):
            load_scenario(write(tmp_path, """
[system]
f = ["u", "u"]
g = "-u"
k = 1
"""))

    def test_unknown_method(self, tmp_path):
        with pytest.raises(SchemaError, match=r"run\.method"):
            load_scenario(write(tmp_path, MINIMAL + """
[run]
method = "shooting"
T = 1.0
"""))

    def test_regularization_requires_alpha(self, tmp_path):
        with pytest.raises(SchemaError, match=r"run\.alpha"):
            load_scenario(write(tmp_path, MINIMAL + """
[run]
method = "hysteresis"
T = 1.0
"""))

    def test_embedding_requires_scale(self, tmp_path):
        with pytest.raises(SchemaError, match=r"run\.epsilon"):
            load_scenario(write(tmp_path, MINIMAL + """
[run]
method = "embedding"
T = 1.0
alpha = 0.1
"""))

    def test_embedding_kappa_derives_epsilon(self, tmp_path):
        sc = load_scenario(write(tmp_path, MINIMAL + """
[run]
method = "embedding"
T = 1.0
alpha = 0.1
kappa = 0.1
"""))
        assert sc.run.epsilon == pytest.approx(0.01)

    def test_unknown_integrator_key(self, tmp_path):
        with pytest.raises(SchemaError, match=r"integrator\.solver"):
            load_scenario(write(tmp_path, MINIMAL + """
[integrator]
solver = "lsoda"
"""))

    def test_bad_output_format(self, tmp_path):
        with pytest.raises(SchemaError, match=r"output\.format"):
            load_scenario(write(tmp_path, MINIMAL + """
[output]
format = "hdf5"
"""))

    def test_invalid_toml(self, tmp_path):
        with pytest.raises(SchemaError, match="invalid TOML"):
            load_scenario(write(tmp_path, "[system\nbroken"))


class TestCli:
    def test_run_produces_csv(self, tmp_path):
        out = tmp_path / "run.csv"
        rc = main(["--scenario", str(BUNDLED), "--out", str(out), "run"])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "t,x1,y,mode,event"
        assert len(lines) > 10

    def test_compare_reports_both_rates(self, tmp_path):
        out = tmp_path / "cmp.json"
        rc = main(["--scenario", str(BUNDLED), "--out", str(out), "compare"])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["filippov"]["rate"][0] == pytest.approx(-0.2, abs=1e-10)
        assert doc["filippov"]["lambda"] == pytest.approx(0.25, abs=1e-10)
        assert doc["utkin"]["rate"][0] == pytest.approx(0.175, abs=1e-10)
        assert doc["utkin"]["control"] == pytest.approx(-0.5, abs=1e-10)

    def test_missing_scenario_file_is_validation_error(self, tmp_path):
        rc = main(["--scenario", str(tmp_path / "nope.toml"), "run"])
        assert rc == 1

    def test_schema_error_exit_code(self, tmp_path):
        p = write(tmp_path, "[system]\nf = [\"u\"]\ng = 42\n")
        assert main(["--scenario", p, "run"]) == 1

    def test_converge_needs_four_alphas(self, tmp_path):
        p = write(tmp_path, MINIMAL + """
[converge]
method = "hysteresis"
alphas = [0.1, 0.05]
""")
        assert main(["--scenario", p, "converge"]) == 1

    def test_isochrone_csv(self, tmp_path):
        p = write(tmp_path, MINIMAL + """
[isochrone]
alpha = 0.1
x_grid = [0.0]
""")
        out = tmp_path / "iso.csv"
        rc = main(["--scenario", p, "--out", str(out), "isochrone"])
        assert rc == 0
        header, row = out.read_text().splitlines()
        assert header == "x,y_p,residual,ok"
        y_p = float(row.split(",")[1])
        assert y_p == pytest.approx(0.05, abs=1e-8)

    def test_qcurve_csv(self, tmp_path):
        p = write(tmp_path, MINIMAL + """
[qcurve]
alpha = -0.1
epsilon = 0.01
x_grid = [0.0]
""")
        out = tmp_path / "q.csv"
        rc = main(["--scenario", p, "--out", str(out), "qcurve"])
        assert rc == 0
        header, row = out.read_text().splitlines()
        assert header == "x,u,y,ok"
        y = float(row.split(",")[2])
        assert y == pytest.approx(-0.0534730, abs=1e-6)

    def test_region_check_block(self, tmp_path):
        p = write(tmp_path, MINIMAL + """
[region]
kind = "block"
alpha = -0.01
kappa = -0.05
delta = 0.05
samples = 10
""")
        out = tmp_path / "region.json"
        rc = main(["--scenario", p, "--out", str(out), "region-check"])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["violations"] == []
        assert doc["kind"] == "block-B"

    def test_flagged_run_exit_code(self, tmp_path):
        # M = 0.05 truncates the sliding run almost immediately.
        p = write(tmp_path, """
[system]
f = ["0.3 + u^3"]
g = "-0.5 - u"
k = 1
M = 0.05
[run]
method = "hysteresis"
T = 5.0
x0 = [0.0]
alpha = 0.05
y0 = -0.05
mode0 = -1
""")
        out = tmp_path / "run.csv"
        assert main(["--scenario", p, "--out", str(out), "run"]) == 3
        assert out.exists()  # output is still written before flagging

    def test_alpha_override(self, tmp_path):
        out = tmp_path / "run.csv"
        rc = main(["--scenario", str(BUNDLED), "--out", str(out),
                   "run", "--alpha", "0.02", "--T", "0.5"])
        assert rc == 0
        last = out.read_text().splitlines()[-1].split(",")
        assert float(last[0]) == pytest.approx(0.5)
        # y stays inside the overridden band
        assert abs(float(last[2])) <= 0.02 + 1e-9
