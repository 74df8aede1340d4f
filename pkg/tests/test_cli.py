import json
import os

from besovtransfer.cli import main, run_config


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


TOY = """
[map]
name = "linear_circle"
ell = 2

[space]
s = 0.5
p = 1.0
q = 1.0

[discretization]
level = 12

[experiment]
operation = "ly"
j_min = 2
j_max = 4
probes = 32
seed = 1
out = "toy.csv"
"""


def test_list_bestiary(capsys):
    assert main(["list-bestiary"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) >= 7
    assert main(["list-bestiary", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert len(data) >= 7
    names = {row["name"] for row in data}
    assert {"linear_circle", "tent", "lorenz", "wild_family",
            "winky_face"} <= names
    assert any("LY-only" in row["r_ess"] for row in data)


def test_toy_ly_run(tmp_path, capsys):
    cfg = write(tmp_path, TOY)
    rc = main(["run", "--config", cfg, "--out-dir", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "toy.csv").read_text().splitlines()
    assert lines[0].startswith("map,s,p,q,j,K,C,lambda,lambda_root,ess_bound")
    rows = [ln.split(",") for ln in lines if ln and not ln.startswith("#")][1:]
    lams = [float(r[7]) for r in rows]
    assert lams[-1] < 1.0
    assert lams == sorted(lams, reverse=True)  # decays with j
    meta = [ln for ln in lines if ln.startswith("#")]
    assert any("seed=" in ln for ln in meta)
    assert any("level=" in ln for ln in meta)


def test_byte_identical_reruns(tmp_path):
    cfg = write(tmp_path, TOY)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    run_config(cfg, str(out1))
    run_config(cfg, str(out2))
    assert (out1 / "toy.csv").read_bytes() == (out2 / "toy.csv").read_bytes()


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = write(tmp_path, TOY.replace("probes = 32", "probs = 32"))
    assert main(["run", "--config", cfg, "--out-dir", str(tmp_path)]) == 1
    assert "probs" in capsys.readouterr().err


def test_unknown_section_rejected(tmp_path):
    cfg = write(tmp_path, TOY + "\n[extra]\nx = 1\n")
    assert main(["run", "--config", cfg, "--out-dir", str(tmp_path)]) == 1


def test_invalid_space_is_config_error(tmp_path):
    cfg = write(tmp_path, TOY.replace("s = 0.5", "s = 0.9").replace(
        "p = 1.0", "p = 2.0"))
    assert main(["run", "--config", cfg, "--out-dir", str(tmp_path)]) == 1


def test_subcommand_overrides_operation(tmp_path):
    cfg = write(tmp_path, TOY.replace('operation = "ly"', 'operation = "acim"'))
    files = run_config(cfg, str(tmp_path), operation="ly")
    assert files and files[0].endswith("toy.csv")


def test_acim_and_norm_ops(tmp_path):
    acim_cfg = """
[map]
name = "tent"
t = 0.8

[space]
s = 0.5

[discretization]
level = 9

[experiment]
operation = "acim"
"""
    cfg = write(tmp_path, acim_cfg, "acim.toml")
    files = run_config(cfg, str(tmp_path))
    summary = [f for f in files if f.endswith("acim.csv")][0]
    row = [
        ln for ln in open(summary).read().splitlines()
        if ln and not ln.startswith(("map", "#"))
    ][0]
    lam1 = float(row.split(",")[2])
    assert abs(lam1 - 1.0) < 1e-8

    norm_cfg = """
[space]
s = 0.5

[discretization]
level = 8

[experiment]
operation = "norm"
function = "indicator:0.0,0.5"
"""
    cfg2 = write(tmp_path, norm_cfg, "norm.toml")
    files2 = run_config(cfg2, str(tmp_path))
    body = open(files2[0]).read()
    assert "1.0" in body  # the halfline norm value


def test_wild_and_regular_domain_ops(tmp_path):
    wild_cfg = """
[map]
name = "wild_family"
alpha = 1.0
zeta = 1.0
k0 = 4

[experiment]
operation = "wild"
alphas = [1.0, 8.0]
orbits = 200
horizon = 2000
"""
    cfg = write(tmp_path, wild_cfg, "wild.toml")
    (path,) = run_config(cfg, str(tmp_path))
    rows = [
        ln.split(",") for ln in open(path).read().splitlines()
        if ln and not ln.startswith(("alpha", "#"))
    ]
    assert float(rows[0][6]) >= 0.95  # alpha = 1 escapes
    assert float(rows[1][6]) <= 0.05  # alpha = 8 does not

    rd_cfg = """
[space]
s = 0.25
p = 1.0

[experiment]
operation = "regular-domain"
region_kind = "rects"
region = [[0.0, 0.25, 0.0, 0.0625]]
max_level = 8
"""
    cfg2 = write(tmp_path, rd_cfg, "rd.toml")
    files = run_config(cfg2, str(tmp_path))
    body = open([f for f in files if f.endswith(".csv")][0]).read()
    assert ",1," in body  # verified flag


def test_shipped_configs_parse(tmp_path):
    here = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    cfg = os.path.join(here, "configs", "toy_ly.toml")
    if os.path.exists(cfg):
        files = run_config(cfg, str(tmp_path))
        assert files
