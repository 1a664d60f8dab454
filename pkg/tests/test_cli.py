import json

import numpy as np
import pytest

from adimaxwell.cli import (ConfigError, main, parse_config, read_error_csv, sample_snapshot,
                            write_error_csv, write_snapshot)
from adimaxwell.maxwell import EMState, SchemeConfig, assemble_operators, l2_project, zero_state
from adimaxwell.verify import GAMMA_A, ErrorReport, ErrorRow, ManufacturedSolution

from conftest import cube

MINIMAL = """
mode: verify
mesh: {elements: 16, degree: 2, continuity: 1}
time: {tau: 1/10, T: 1}
materials: {eps: 1, mu: 1}
initial: {manufactured: u_A}
"""


def small(tmp_path, extra=""):
    return (f"mesh: {{elements: 3, degree: 2}}\n"
            f"time: {{tau: 0.1, n_steps: 2}}\n"
            f"outputs: {{directory: {tmp_path / 'out'}}}\n" + extra)


def test_parse_minimal_verify():
    rc = parse_config(MINIMAL)
    assert (rc.elements, rc.degree, rc.continuity) == (16, 2, 1)
    assert rc.tau == pytest.approx(0.1) and rc.n_steps == 10 and rc.T == 1
    assert rc.boundary == "pec" and rc.manufactured is not None


def test_phantom_and_voxels_exclusive():
    text = MINIMAL.replace("materials: {eps: 1, mu: 1}",
                           "materials:\n  phantom: {outer_radius: 0.3}\n  voxels: {path: v.raw, dims: [2, 2, 2]}")
    with pytest.raises(ConfigError, match="exactly one material source"):
        parse_config(text)


def test_inconsistent_time():
    with pytest.raises(ConfigError, match="does not match"):
        parse_config(MINIMAL.replace("T: 1}", "T: 1, n_steps: 7}"))


def test_two_initial_sources():
    with pytest.raises(ConfigError, match="exactly one"):
        parse_config(MINIMAL.replace("{manufactured: u_A}", "{manufactured: u_A, zero: true}"))


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL + "outputs:\n  snapshot_evry: 3\n")
    assert exc.value.key == "outputs.snapshot_evry"
    assert exc.value.line == 8  # MINIMAL opens with a blank line


def test_malformed_yaml_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("mesh: {elements: 3\ntime: [")
    assert exc.value.line is not None


@pytest.mark.parametrize("bad", ["mesh.elements=0", "materials.eps=0", "mesh.continuity=2",
                                 "outputs.snapshot_every=-1", "boundary=periodic"])
def test_semantic_errors(bad):
    with pytest.raises(ConfigError):
        parse_config(MINIMAL, [bad])


def test_overrides():
    rc = parse_config(MINIMAL, ["time.tau=1/20", "time.T=0.5", "verify.l2=0.01"])
    assert rc.n_steps == 10 and rc.verify["l2"] == 0.01
    with pytest.raises(ConfigError):
        parse_config(MINIMAL, ["mesh.nodes=3"])


def test_snapshot_of_zero_state(tmp_path):
    sp = cube(2, 2)
    path = write_snapshot(zero_state((4, 4, 4)), sp, tmp_path / "z.vtk", resolution=5)
    lines = path.read_text().splitlines()
    assert "DIMENSIONS 5 5 5" in lines and "POINT_DATA 125" in lines
    assert "ORIGIN 0.0 0.0 0.0" in lines
    for name in ("E1", "E2", "E3", "H1", "H2", "H3"):
        i = lines.index(f"SCALARS {name} double 1")
        vals = [float(v) for v in lines[i + 2:i + 2 + 125]]
        assert len(vals) == 125 and not any(vals)


def test_snapshot_sample_count():
    snap = sample_snapshot(zero_state((4, 4, 4)), cube(2, 2), 7)
    assert all(a.size == 7 ** 3 for a in snap.fields.values())
    with pytest.raises(ValueError):
        sample_snapshot(zero_state((4, 4, 4)), cube(2, 2), 1)


def test_snapshot_centre_value(tmp_path):
    cfg = SchemeConfig(tau=0.1, spaces=cube(8, 2))
    ops = assemble_operators(cfg)
    ms = ManufacturedSolution.u_A()
    st = EMState(l2_project(ms.initial("E"), ops, "E"), l2_project(ms.initial("H"), ops, "H"))
    snap = sample_snapshot(st, cfg.spaces, 5)
    assert snap.fields["E1"][2, 2, 2] == pytest.approx(GAMMA_A, abs=5e-3)
    lines = write_snapshot(snap, cfg.spaces, tmp_path / "u.vtk").read_text().splitlines()
    i = lines.index("SCALARS E1 double 1")
    # x fastest: centre sample index is 2 + 5*2 + 25*2
    assert float(lines[i + 2 + 62]) == snap.fields["E1"][2, 2, 2]


def test_error_csv_header_only(tmp_path):
    p = write_error_csv(ErrorReport(), tmp_path / "e.csv")
    assert p.read_text() == "step,t,l2_E,l2_H,hcurl_E,hcurl_H\n"


def test_error_csv_round_trip(tmp_path, rng):
    rep = ErrorReport()
    for n in range(4):
        rep.append(ErrorRow(n, n * 0.1, *rng.uniform(0, 1, 4)))
    back = read_error_csv(write_error_csv(rep, tmp_path / "e.csv"))
    assert back.rows == rep.rows


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    lines = [line for line in (out.out + out.err).splitlines() if line.startswith("adimaxwell: ")]
    return code, [json.loads(line[len("adimaxwell: "):]) for line in lines]


def test_run_mode_writes_rows_and_echo(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(small(tmp_path, "initial: {manufactured: u_A}\n").replace("n_steps: 2", "n_steps: 10"))
    code, msgs = run_cli(["run", "--config", str(cfg)], capsys)
    assert code == 0 and msgs[-1]["status"] == "ok"
    rows = (tmp_path / "out" / "errors.csv").read_text().splitlines()
    assert len(rows) == 12
    assert (tmp_path / "out" / "config.resolved.yaml").exists()


def test_verify_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(small(tmp_path, "initial: {manufactured: u_A}\n"))
    assert run_cli(["verify", "--config", str(cfg), "--set", "verify.l2=10",
                    "--set", "verify.hcurl=10"], capsys)[0] == 0
    code, msgs = run_cli(["verify", "--config", str(cfg), "--set", "verify.l2=1e-9"], capsys)
    assert code == 2
    assert msgs[-1]["kind"] == "numerical" and "bound violated" in msgs[-1]["message"]


def test_config_error_exit(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(small(tmp_path, "initial: {zero: true}\n"))
    code, msgs = run_cli(["run", "--config", str(cfg), "--set", "materials.eps=0"], capsys)
    assert code == 1 and msgs[-1]["kind"] == "config"
    assert not (tmp_path / "out").exists()


def test_missing_voxel_file_exit(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(small(tmp_path, "initial: {zero: true}\nmaterials:\n"
                                   f"  voxels: {{path: {tmp_path / 'none.raw'}, dims: [4, 4, 4]}}\n"))
    code, msgs = run_cli(["run", "--config", str(cfg)], capsys)
    assert code == 3 and msgs[-1]["kind"] == "io"


def test_truncated_voxel_file_exit(tmp_path, capsys):
    (tmp_path / "v.raw").write_bytes(bytes(10))
    cfg = tmp_path / "c.yaml"
    cfg.write_text(small(tmp_path, "initial: {zero: true}\nmaterials:\n"
                                   f"  voxels: {{path: {tmp_path / 'v.raw'}, dims: [4, 4, 4]}}\n"))
    assert run_cli(["run", "--config", str(cfg)], capsys)[0] == 3


def test_missing_config_exit(tmp_path, capsys):
    assert run_cli(["run", "--config", str(tmp_path / "nope.yaml")], capsys)[0] == 3


def test_voxel_run_with_snapshots(tmp_path, capsys):
    d = np.zeros((4, 4, 4), dtype=np.uint8)
    d[1:3, 1:3, 1:3] = 255
    (tmp_path / "v.raw").write_bytes(d.tobytes())
    cfg = tmp_path / "c.yaml"
    cfg.write_text(small(tmp_path, "initial: {manufactured: u_A}\nmaterials:\n"
                                   f"  voxels: {{path: {tmp_path / 'v.raw'}, dims: [4, 4, 4]}}\n"
                                   "  table: {eps: {air: 1, tissue: 2, skull: 3}}\n")
                   .replace("directory:", "snapshot_every: 1, snapshot_resolution: 4, directory:"))
    assert run_cli(["run", "--config", str(cfg)], capsys)[0] == 0
    out = tmp_path / "out"
    assert sorted(p.name for p in out.glob("*.vtk")) == [f"fields_{n:06d}.vtk" for n in range(3)]
    assert len((out / "norms.csv").read_text().splitlines()) == 4


def test_deterministic_csv(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(small(tmp_path, "initial: {manufactured: u_A}\n"))
    outs = []
    for i in range(2):
        assert run_cli(["run", "--config", str(cfg), "--set", f"outputs.directory={tmp_path / str(i)}"],
                       capsys)[0] == 0
        outs.append((tmp_path / str(i) / "errors.csv").read_bytes())
    assert outs[0] == outs[1]


def test_preset_loads():
    from adimaxwell.cli import load_config

    for name in ("paper-verify", "paper-verify-fine", "paper-convergence", "scaling", "phantom-run"):
        rc = load_config(name)
        assert rc.mode is not None


def test_mode_mismatch(capsys):
    assert run_cli(["run", "--config", "paper-verify"], capsys)[0] == 1
