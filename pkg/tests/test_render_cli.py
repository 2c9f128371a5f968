import json
from pathlib import Path

import numpy as np

import balicodec as bc
from balicodec.cli import cli_main
from balicodec.formats import parse_pts, write_pts
from balicodec.render import colormap, load_image, render_field_png, render_heatmap_png, save_image

GOLDEN = Path(__file__).parent / "golden"


def golden_composite():
    grid = bc.GridSpec(64, 64)
    pts = np.array([[20.25, 20.75], [44.5, 22.25], [32.0, 45.5], [25.75, 33.25]])
    l = bc.LandmarkSet(bc.Scheme.CUSTOM, pts, grid)
    scheme = bc.BoundaryScheme(((0, 1), (1, 2, 3, 0)), 4)
    return bc.encode_composite(l, scheme, r_support=4)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def test_golden_renders_are_stable(tmp_path):
    stack, comp = golden_composite()
    render_heatmap_png(stack, tmp_path / "a.png")
    render_heatmap_png(stack, tmp_path / "b.png")
    # byte-identical across runs
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    # and identical to the frozen golden files
    assert (tmp_path / "a.png").read_bytes() == (GOLDEN / "heatmap_composite.png").read_bytes()
    render_field_png(comp.field, tmp_path / "u.png", plane="u")
    assert (tmp_path / "u.png").read_bytes() == (GOLDEN / "field_u.png").read_bytes()


def test_all_zero_channel_renders_uniform(tmp_path):
    grid = bc.GridSpec(32, 32)
    stack = bc.HeatmapStack(np.zeros((1, 32, 32)), grid, bc.HeatmapKind.LANDMARK)
    render_heatmap_png(stack, tmp_path / "zero.png")
    img = load_image(tmp_path / "zero.png")
    assert np.all(img.reshape(-1, 3) == img[0, 0])
    assert np.allclose(img[0, 0] * 255, colormap("sequential")[0], atol=0.5)


def test_peak_cell_gets_colormap_maximum(tmp_path):
    grid = bc.GridSpec(32, 32)
    channels = np.zeros((1, 32, 32))
    channels[0, 7, 9] = 1.0
    stack = bc.HeatmapStack(channels, grid, bc.HeatmapKind.LANDMARK)
    render_heatmap_png(stack, tmp_path / "peak.png")
    img = np.rint(load_image(tmp_path / "peak.png") * 255)
    assert np.array_equal(img[7, 9], colormap("sequential")[255])


def test_render_with_background_and_arrows(tmp_path):
    stack, comp = golden_composite()
    bg = np.full((64, 64, 3), 0.5)
    render_heatmap_png(stack, tmp_path / "blend.png", background=bg, alpha=0.5)
    render_heatmap_png(stack, tmp_path / "chan2.png", channel=2)
    render_field_png(comp.field, tmp_path / "arrows.png", plane="v", channel=1, arrows=True)
    for name in ("blend.png", "chan2.png", "arrows.png"):
        assert (tmp_path / name).exists()


def test_save_load_image_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    img = np.rint(rng.random((16, 16, 3)) * 255) / 255.0
    save_image(img, tmp_path / "x.png")
    back = load_image(tmp_path / "x.png")
    assert np.abs(back - img).max() < 1e-9


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def write_face_pts(path, seed=11, grid=None):
    rng = np.random.default_rng(seed)
    grid = grid or bc.GridSpec(128, 128)
    face = bc.synthetic_face(rng, grid)
    Path(path).write_text(write_pts(face))
    return face


def test_cli_encode_decode_round_trip(tmp_path):
    pts = tmp_path / "face.pts"
    face = write_face_pts(pts)
    cfg = tmp_path / "grid.cfg"
    cfg.write_text("grid_width = 128\ngrid_height = 128\n")
    assert cli_main(["encode", "--pts", str(pts), "--config", str(cfg)]) == 0
    container = tmp_path / "face.bali"
    assert container.exists()
    out = tmp_path / "decoded.pts"
    assert cli_main(["decode", "--container", str(container), "--out", str(out)]) == 0
    decoded = parse_pts(out.read_text(), grid=bc.GridSpec(128, 128))
    assert np.abs(decoded.points - face.points).max() < 1e-4


def test_cli_encode_deterministic(tmp_path):
    pts = tmp_path / "face.pts"
    write_face_pts(pts)
    cfg = tmp_path / "grid.cfg"
    cfg.write_text("grid_width = 128\ngrid_height = 128\n")
    a, b = tmp_path / "a.bali", tmp_path / "b.bali"
    assert cli_main(["encode", "--pts", str(pts), "--out", str(a), "--config", str(cfg)]) == 0
    assert cli_main(["encode", "--pts", str(pts), "--out", str(b), "--config", str(cfg)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_cli_roundtrip_subcommand(capsys):
    assert cli_main(["roundtrip", "--n", "100", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert "max per-coordinate error" in out
    err_px = float(out.split("error")[1].split("px")[0])
    assert err_px < 1e-4


def test_cli_eval_identical_dirs(tmp_path):
    pred = tmp_path / "pred"
    gt = tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    for i in range(4):
        face = write_face_pts(pred / f"s{i}.pts", seed=i)
        (gt / f"s{i}.pts").write_text(write_pts(face))
    out_json = tmp_path / "report.json"
    out_csv = tmp_path / "report.csv"
    code = cli_main(
        [
            "eval",
            "--pred", str(pred),
            "--gt", str(gt),
            "--norm", "interocular",
            "--tau", "0.08",
            "--out-csv", str(out_csv),
            "--out-json", str(out_json),
            "--jobs", "2",
        ]
    )
    assert code == 0
    report = json.loads(out_json.read_text())
    assert report["mean_nme"] == 0.0
    assert report["auc"] == 1.0
    assert report["fr"] == 0.0
    assert out_csv.read_text().splitlines()[0] == "sample,nme"


def test_cli_eval_box_normalization(tmp_path):
    pred = tmp_path / "pred"
    gt = tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    face = write_face_pts(pred / "s.pts", seed=3)
    (gt / "s.pts").write_text(write_pts(face))
    (gt / "s.box").write_text("0 0 100 100\n")
    assert cli_main(["eval", "--pred", str(pred), "--gt", str(gt), "--norm", "box_diag"]) == 0
    # missing sidecar is a validation error
    (gt / "s.box").unlink()
    assert cli_main(["eval", "--pred", str(pred), "--gt", str(gt), "--norm", "box_diag"]) == 1


def test_cli_perturb_and_loss(tmp_path):
    img = np.full((128, 128, 3), 0.5)
    x = np.linspace(0, np.pi * 2, 128)
    img[:, :, 0] = 0.5 + 0.25 * np.sin(x)[None, :]
    save_image(img, tmp_path / "face.png")
    pts = tmp_path / "face.pts"
    write_face_pts(pts)
    out_dir = tmp_path / "pair"
    assert (
        cli_main(
            [
                "perturb",
                "--image", str(tmp_path / "face.png"),
                "--pts", str(pts),
                "--out", str(out_dir),
                "--seed", "4",
            ]
        )
        == 0
    )
    record = (out_dir / "face_disturbance.json").read_text().strip()
    d = bc.Disturbance.from_json(record)
    assert (out_dir / "face_beta.png").exists()

    # a second run with the same seed is byte-identical
    out_dir2 = tmp_path / "pair2"
    assert (
        cli_main(
            [
                "perturb",
                "--image", str(tmp_path / "face.png"),
                "--pts", str(pts),
                "--out", str(out_dir2),
                "--seed", "4",
            ]
        )
        == 0
    )
    assert (out_dir2 / "face_beta.png").read_bytes() == (out_dir / "face_beta.png").read_bytes()
    assert (out_dir2 / "face_disturbance.json").read_text() == record + "\n"

    # encode both members and take the loss breakdown through the CLI
    cfg = tmp_path / "grid.cfg"
    cfg.write_text("grid_width = 128\ngrid_height = 128\n")
    a = tmp_path / "a.bali"
    assert cli_main(["encode", "--pts", str(pts), "--out", str(a), "--config", str(cfg)]) == 0
    d_path = tmp_path / "texture.json"
    d_path.write_text(bc.Disturbance.blur(2).to_json() + "\n")
    out_json = tmp_path / "loss.json"
    code = cli_main(
        [
            "loss",
            "--alpha", str(a),
            "--beta", str(a),
            "--disturbance", str(d_path),
            "--gt-alpha", str(a),
            "--gt-beta", str(a),
            "--out", str(out_json),
        ]
    )
    assert code == 0
    payload = json.loads(out_json.read_text())
    assert payload["scl"] == 0.0
    assert payload["total"] == 0.0


def test_cli_render_subcommand(tmp_path):
    pts = tmp_path / "face.pts"
    write_face_pts(pts)
    cfg = tmp_path / "grid.cfg"
    cfg.write_text("grid_width = 128\ngrid_height = 128\n")
    container = tmp_path / "face.bali"
    assert cli_main(["encode", "--pts", str(pts), "--out", str(container), "--config", str(cfg)]) == 0
    out_dir = tmp_path / "renders"
    assert cli_main(["render", "--container", str(container), "--out", str(out_dir)]) == 0
    assert {p.name for p in out_dir.iterdir()} == {
        "landmarks.png",
        "boundaries.png",
        "field_u.png",
        "field_v.png",
    }


def test_cli_loss_requires_paired_gt_flags(tmp_path):
    pts = tmp_path / "face.pts"
    write_face_pts(pts)
    cfg = tmp_path / "grid.cfg"
    cfg.write_text("grid_width = 128\ngrid_height = 128\n")
    a = tmp_path / "a.bali"
    assert cli_main(["encode", "--pts", str(pts), "--out", str(a), "--config", str(cfg)]) == 0
    d_path = tmp_path / "d.json"
    d_path.write_text(bc.Disturbance.blur(2).to_json() + "\n")
    code = cli_main(
        ["loss", "--alpha", str(a), "--beta", str(a), "--disturbance", str(d_path), "--gt-alpha", str(a)]
    )
    assert code == 1


def test_cli_exit_codes(tmp_path):
    # unknown flags -> usage, exit 1
    assert cli_main(["decode", "--nonsense"]) == 1
    assert cli_main(["not-a-command"]) == 1
    # malformed container content -> validation, exit 1
    bad = tmp_path / "bad.bali"
    bad.write_bytes(b"NOPE" + b"\x00" * 64)
    assert cli_main(["decode", "--container", str(bad)]) == 1
    # missing file -> I/O, exit 2
    assert cli_main(["decode", "--container", str(tmp_path / "missing.bali")]) == 2
    # help -> exit 0
    assert cli_main(["--help"]) == 0


def test_cli_selftest_quick():
    assert cli_main(["selftest", "--quick", "--seed", "1"]) == 0
