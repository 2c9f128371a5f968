"""Command-line driver.

Subcommands: ``encode`` (pts -> tensor container), ``decode`` (container ->
pts), ``roundtrip`` (encode/decode self-check), ``perturb`` (image + pts ->
paired sample), ``loss`` (containers + disturbance record -> breakdown JSON),
``eval`` (pred dir + gt dir -> report), ``render`` (container -> PNGs) and
``selftest`` (invariant suite).  Exit codes: 0 success, 1 validation error,
2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .decode import DecodeConfig, DecodeMode, decode_all
from .disturb import Disturbance, make_pair, sample_disturbance
from .errors import BaliError, ValidationError
from .field import BaliComposite, BaliField, encode_composite
from .formats import (
    parse_box,
    parse_pts,
    read_container,
    report_to_csv,
    report_to_json,
    suspect_one_based,
    write_container,
    write_pts,
)
from .geometry import GridSpec, LandmarkSet, default_boundary_scheme
from .heatmap import HeatmapKind, HeatmapStack
from .losses import StageOutputs, loss_overall, loss_scl, SupervisedSample
from .metrics import EvalReport, NormKind, Normalization, nme
from .render import load_image, render_field_png, render_heatmap_png, save_image
from .synthetic import random_landmarks

__all__ = ["main", "cli_main", "composite_to_sections", "sections_to_tensors"]


# ---------------------------------------------------------------------------
# container schema shared by encode/decode/loss/render
# ---------------------------------------------------------------------------

def composite_to_sections(
    landmarks_stack: HeatmapStack, composite: BaliComposite
) -> dict[str, tuple[str, np.ndarray]]:
    field = composite.field
    return {
        "landmark_heatmaps": ("heatmap_landmark", landmarks_stack.channels),
        "boundary_heatmaps": ("heatmap_boundary", composite.boundary.channels),
        "u_offsets": ("field_u", field.u_offsets),
        "v_offsets": ("field_v", field.v_offsets),
        "support": ("field_support", field.support.astype(np.float32)),
        "meta": ("meta", np.array([float(field.r_support)], dtype=np.float32)),
    }


def sections_to_tensors(
    sections: dict[str, tuple[str, np.ndarray]]
) -> tuple[HeatmapStack, HeatmapStack | None, BaliField | None]:
    """(landmark stack, boundary stack, field) from container sections."""
    if "landmark_heatmaps" not in sections:
        raise ValidationError("container has no 'landmark_heatmaps' section")
    lm = np.clip(np.asarray(sections["landmark_heatmaps"][1], float), 0.0, 1.0)
    grid = GridSpec(lm.shape[2], lm.shape[1])
    landmark_stack = HeatmapStack(lm, grid, HeatmapKind.LANDMARK)
    boundary_stack = None
    if "boundary_heatmaps" in sections:
        bd = np.clip(np.asarray(sections["boundary_heatmaps"][1], float), 0.0, 1.0)
        boundary_stack = HeatmapStack(bd, grid, HeatmapKind.BOUNDARY)
    field = None
    if "u_offsets" in sections and "v_offsets" in sections:
        r_support = 5
        if "meta" in sections:
            r_support = max(1, int(round(float(np.asarray(sections["meta"][1]).ravel()[0]))))
        u = np.asarray(sections["u_offsets"][1], float)
        v = np.asarray(sections["v_offsets"][1], float)
        if "support" in sections:
            support = np.asarray(sections["support"][1]) >= 0.5
        else:
            support = (u != 0) | (v != 0)
        field = BaliField(u, v, support, r_support, grid)
    return landmark_stack, boundary_stack, field


def _container_to_stage(path: Path) -> tuple[StageOutputs, HeatmapStack]:
    sections = read_container(path.read_bytes())
    landmark_stack, boundary_stack, field = sections_to_tensors(sections)
    if boundary_stack is None:
        raise ValidationError(f"{path}: container has no 'boundary_heatmaps' section")
    return StageOutputs((landmark_stack,), (boundary_stack,), field), landmark_stack


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _encode_landmarks(l: LandmarkSet, cfg: RunConfig):
    scheme = default_boundary_scheme(l.scheme)
    return encode_composite(
        l,
        scheme,
        kernel=cfg.kernel,
        boundary_sigma=cfg.boundary_sigma,
        xi=cfg.boundary_floor,
        r_support=cfg.field_radius,
        grid=l.grid,
        boundary_exponent=cfg.boundary_exponent,
    )


def _cmd_encode(args) -> int:
    cfg = load_config(args.config)
    text = Path(args.pts).read_text()
    l = parse_pts(text, grid=cfg.grid, one_based=args.one_based)
    landmark_stack, composite = _encode_landmarks(l, cfg)
    out = Path(args.out) if args.out else Path(args.pts).with_suffix(".bali")
    out.write_bytes(write_container(composite_to_sections(landmark_stack, composite)))
    print(f"encoded {len(l)} landmarks -> {out}")
    return 0


def _cmd_decode(args) -> int:
    sections = read_container(Path(args.container).read_bytes())
    landmark_stack, _, field = sections_to_tensors(sections)
    mode = DecodeMode(args.mode)
    if mode is DecodeMode.FIELD_WEIGHTED and field is None:
        raise ValidationError("container has no offset field; use --mode heatmap_soft_argmax")
    result = decode_all(landmark_stack, field, DecodeConfig(args.crop_radius, mode))
    for phi, warning in enumerate(result.warnings):
        if warning is not None:
            print(f"warning: landmark {phi}: {warning}", file=sys.stderr)
    out = Path(args.out) if args.out else Path(args.container).with_suffix(".pts")
    out.write_text(write_pts(result.landmarks))
    print(f"decoded {len(result.landmarks)} landmarks -> {out}")
    return 0


def _cmd_roundtrip(args) -> int:
    from .field import encode_field
    from .heatmap import render_landmark_heatmaps

    cfg = load_config(args.config)
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.n):
        l = random_landmarks(rng, cfg.grid, margin=float(cfg.field_radius + 1))
        stack = render_landmark_heatmaps(l, cfg.kernel)
        field = encode_field(l, r_support=cfg.field_radius)
        result = decode_all(stack, field, DecodeConfig(cfg.crop_radius))
        worst = max(worst, float(np.abs(result.landmarks.points - l.points).max()))
    print(f"roundtrip over {args.n} samples: max per-coordinate error {worst:.3e} px")
    if worst >= 1e-4:
        print("FAIL: error exceeds 1e-4 px", file=sys.stderr)
        return 1
    return 0


def _cmd_perturb(args) -> int:
    cfg = load_config(args.config)
    img = load_image(args.image)
    landmarks = None
    if args.pts:
        grid = GridSpec(img.shape[1], img.shape[0])
        landmarks = parse_pts(Path(args.pts).read_text(), grid=grid, one_based=args.one_based)
    policy = cfg.policy
    if policy.image_size != (img.shape[1], img.shape[0]):
        from dataclasses import replace

        policy = replace(policy, image_size=(img.shape[1], img.shape[0]))
    d = sample_disturbance(args.seed, policy)
    pair = make_pair(img, landmarks, d)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.image).stem
    save_image(pair.image_beta, out_dir / f"{stem}_beta.png")
    (out_dir / f"{stem}_disturbance.json").write_text(d.to_json() + "\n")
    if pair.landmarks_beta is not None:
        (out_dir / f"{stem}_beta.pts").write_text(write_pts(pair.landmarks_beta))
    print(f"perturbed {args.image} with {d.kind.value} -> {out_dir}")
    return 0


def _cmd_loss(args) -> int:
    cfg = load_config(args.config)
    d = Disturbance.from_json(Path(args.disturbance).read_text().strip())
    alpha, alpha_lm_stack = _container_to_stage(Path(args.alpha))
    beta, _ = _container_to_stage(Path(args.beta))
    payload: dict[str, float] = {
        "scl": loss_scl(alpha, beta, d, include_final=True)
    }
    if (args.gt_alpha is None) != (args.gt_beta is None):
        raise ValidationError("--gt-alpha and --gt-beta must be given together")
    if args.gt_alpha:
        gt_alpha, _ = _container_to_stage(Path(args.gt_alpha))
        gt_beta, _ = _container_to_stage(Path(args.gt_beta))
        decode_cfg = DecodeConfig(cfg.crop_radius)
        sample = SupervisedSample(
            pred=(alpha, beta),
            gt=(gt_alpha, gt_beta),
            pred_landmarks=(
                decode_all(alpha.landmark_stages[-1], alpha.field, decode_cfg).landmarks,
                decode_all(beta.landmark_stages[-1], beta.field, decode_cfg).landmarks,
            ),
            gt_landmarks=(
                decode_all(gt_alpha.landmark_stages[-1], gt_alpha.field, decode_cfg).landmarks,
                decode_all(gt_beta.landmark_stages[-1], gt_beta.field, decode_cfg).landmarks,
            ),
            disturbance=d,
        )
        overall = loss_overall(sample, cfg.weights, r_crop=cfg.crop_radius)
        payload.update(overall.breakdown)
        payload["total"] = overall.total
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _eval_one(stem: str, pred_dir: Path, gt_dir: Path, args, cfg: RunConfig):
    pred = parse_pts((pred_dir / f"{stem}.pts").read_text(), one_based=args.one_based)
    gt = parse_pts((gt_dir / f"{stem}.pts").read_text(), one_based=args.one_based)
    kind = NormKind(args.norm or cfg.normalization)
    if kind in (NormKind.BOX_GEOMEAN, NormKind.BOX_DIAG):
        box_dir = Path(args.box_dir) if args.box_dir else gt_dir
        box_path = box_dir / f"{stem}.box"
        if not box_path.exists():
            raise ValidationError(f"{kind.value} normalization needs {box_path}")
        norm = Normalization(kind, parse_box(box_path.read_text()))
    else:
        norm = Normalization(kind)
    return stem, nme(pred, gt, norm), gt


def _cmd_eval(args) -> int:
    cfg = load_config(args.config)
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    stems = sorted(p.stem for p in pred_dir.glob("*.pts"))
    if not stems:
        raise ValidationError(f"no .pts files under {pred_dir}")
    missing = [s for s in stems if not (gt_dir / f"{s}.pts").exists()]
    if missing:
        raise ValidationError(f"ground truth missing for: {', '.join(missing[:5])}")
    results = {}
    gts = {}
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            for stem, err, gt in pool.map(
                lambda s: _eval_one(s, pred_dir, gt_dir, args, cfg), stems
            ):
                results[stem] = err
                gts[stem] = gt
    else:
        for stem in stems:
            stem, err, gt = _eval_one(stem, pred_dir, gt_dir, args, cfg)
            results[stem] = err
            gts[stem] = gt
    if not args.one_based and suspect_one_based(gts.values()):
        print(
            "warning: every coordinate is >= 1; annotations may be 1-based "
            "(rerun with --one-based)",
            file=sys.stderr,
        )
    tau = args.tau if args.tau is not None else cfg.tau
    report = EvalReport.from_errors([results[s] for s in stems], tau)
    if args.out_csv:
        Path(args.out_csv).write_text(report_to_csv(report, stems))
    if args.out_json:
        Path(args.out_json).write_text(report_to_json(report, args.norm or cfg.normalization))
    print(
        f"evaluated {len(stems)} samples: mean NME {report.mean_nme:.6f}, "
        f"AUC@{report.tau:g} {report.auc:.6f}, FR@{report.tau:g} {report.fr:.6f}"
    )
    return 0


def _cmd_render(args) -> int:
    sections = read_container(Path(args.container).read_bytes())
    landmark_stack, boundary_stack, field = sections_to_tensors(sections)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    background = load_image(args.background) if args.background else None
    render_heatmap_png(landmark_stack, out_dir / "landmarks.png", background=background)
    written = ["landmarks.png"]
    if boundary_stack is not None:
        render_heatmap_png(boundary_stack, out_dir / "boundaries.png", background=background)
        written.append("boundaries.png")
    if field is not None:
        for plane in ("u", "v"):
            render_field_png(
                field,
                out_dir / f"field_{plane}.png",
                plane=plane,
                background=background,
                arrows=args.arrows,
            )
            written.append(f"field_{plane}.png")
    print(f"rendered {', '.join(written)} -> {out_dir}")
    return 0


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return run_selftest(seed=args.seed, quick=args.quick)


# ---------------------------------------------------------------------------
# parser plumbing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on bad flags, per the CLI contract
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bali-codec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", default=None, help="flat key=value config file")

    p = sub.add_parser("encode", help="encode a .pts file into a tensor container")
    p.add_argument("--pts", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--one-based", action="store_true")
    add_config(p)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("decode", help="decode a tensor container back to .pts")
    p.add_argument("--container", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--crop-radius", type=int, default=3)
    p.add_argument(
        "--mode",
        choices=[m.value for m in DecodeMode],
        default=DecodeMode.FIELD_WEIGHTED.value,
    )
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("roundtrip", help="encode/decode self-check on synthetic landmarks")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    add_config(p)
    p.set_defaults(func=_cmd_roundtrip)

    p = sub.add_parser("perturb", help="build a disturbed twin of an image (+ labels)")
    p.add_argument("--image", required=True)
    p.add_argument("--pts", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--one-based", action="store_true")
    add_config(p)
    p.set_defaults(func=_cmd_perturb)

    p = sub.add_parser("loss", help="loss breakdown from paired containers")
    p.add_argument("--alpha", required=True)
    p.add_argument("--beta", required=True)
    p.add_argument("--disturbance", required=True)
    p.add_argument("--gt-alpha", default=None)
    p.add_argument("--gt-beta", default=None)
    p.add_argument("--out", default=None)
    add_config(p)
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("eval", help="score predicted .pts files against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--norm", choices=[k.value for k in NormKind], default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--box-dir", default=None)
    p.add_argument("--out-csv", default=None)
    p.add_argument("--out-json", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--one-based", action="store_true")
    add_config(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("render", help="render container tensors as PNG images")
    p.add_argument("--container", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--background", default=None)
    p.add_argument("--arrows", action="store_true")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("selftest", help="run the invariant suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true")
    p.set_defaults(func=_cmd_selftest)

    return parser


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except BaliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(cli_main())
