"""Command-line front end: embed, decode, attack, cluster, calibrate,
evaluate, and report subcommands over PNG files.

Exit codes: 0 on success, 2 when some images failed but the run finished
(partial failure), 1 on fatal errors including bad usage.
"""

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import attacks, harness
from .imagecore import load_image, make_rng, save_image
from .spectral import (
    DEFAULT_THRESHOLDS,
    artifact_scores,
    centered_log_magnitude,
    classify_cluster,
    fft2,
)
from .watermarkers import (
    DEFAULT_MESSAGE_BITS,
    FAMILIES,
    FAMILY_FOURIER_RING,
    FAMILY_SPREAD_SPECTRUM,
    WatermarkKey,
    embed,
    load_key,
    message_from_hex,
    message_to_hex,
    random_message,
    ring_detect,
    save_key,
    ss_decode,
)


class _UsageError(Exception):
    """Bad arguments; converted to exit code 1 by main."""


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the report contract reserves 2
    # for partial per-image failure, so route usage problems through 1.
    def error(self, message):
        raise _UsageError(message)


def _read_message(path):
    return message_from_hex(Path(path).read_text())


def _load_inputs(paths):
    return [Path(p) for p in paths]


def _out_path(out, src, n_inputs):
    """Resolve the output path for one input file.

    With several inputs, out is a directory. With one input it is a file
    path unless it names an existing directory.
    """
    out = Path(out)
    if n_inputs > 1 or out.is_dir():
        out.mkdir(parents=True, exist_ok=True)
        return out / src.name
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, doc):
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _resolve_key(args, require_message):
    """Build (key, message) from --key / --family style arguments."""
    if args.key:
        key = load_key(args.key)
    elif args.family:
        key = WatermarkKey(
            seed=args.seed, family=args.family, amplitude=args.amplitude
        )
    else:
        raise _UsageError("either --key or --family is required")
    message = None
    if key.family == FAMILY_SPREAD_SPECTRUM:
        if args.message:
            message = _read_message(args.message)
        elif getattr(args, "random_message", None):
            message = random_message(args.random_message, make_rng(args.seed))
        elif require_message:
            raise _UsageError(
                "spread-spectrum needs --message or --random-message"
            )
    if getattr(args, "save_key", None):
        save_key(args.save_key, key)
    if message is not None and getattr(args, "save_message", None):
        Path(args.save_message).write_text(message_to_hex(message) + "\n")
    return key, message


# ---------------------------------------------------------------------------
# Subcommands. Each returns the process exit code.

def _cmd_embed(args):
    key, message = _resolve_key(args, require_message=True)
    inputs = _load_inputs(args.inputs)
    failures = 0
    for src in inputs:
        try:
            img = load_image(src)
            marked = embed(img, key, message)
            dst = _out_path(args.out, src, len(inputs))
            save_image(dst, marked)
            print(f"{src} -> {dst}")
        except Exception as exc:
            failures += 1
            print(f"{src}: FAILED: {exc}", file=sys.stderr)
    return 2 if failures else 0


def _cmd_decode(args):
    key, message = _resolve_key(args, require_message=False)
    inputs = _load_inputs(args.inputs)
    rows = []
    failures = 0
    for src in inputs:
        row = {"image": str(src)}
        try:
            img = load_image(src)
            if key.family == FAMILY_SPREAD_SPECTRUM:
                n_bits = len(message) if message is not None else None
                decoded, aux = ss_decode(img, key, reference=message, n_bits=n_bits)
                row["message"] = message_to_hex(decoded)
                if message is not None:
                    row["distance"] = float(aux)
            elif key.family == FAMILY_FOURIER_RING:
                rho = ring_detect(img, key)
                row["rho"] = float(rho)
                row["distance"] = float(1.0 - rho)
            else:
                raise ValueError(f"family {key.family!r} carries no decodable payload")
        except Exception as exc:
            failures += 1
            row["error"] = f"{exc}"
        rows.append(row)
        line = "  ".join(f"{k}={v}" for k, v in row.items() if k != "image")
        print(f"{row['image']}  {line}")
    if args.json:
        _write_json(args.json, rows)
    return 2 if failures else 0


def _attack_one(img, method, args, filters, idx):
    """Apply one non-auto attack method; filters caches per-shape training."""
    if method == "translate":
        return attacks.translation_attack(img, args.dx)
    if method == "regen":
        cfg = attacks.RegenConfig(
            strength=args.strength, passes=args.passes, seed=args.seed ^ idx
        )
        return attacks.regenerate(img, cfg)
    # filter / refine / colorxfer share the learned-filter front end.
    shape = img.shape[:2]
    pipe_cfg = attacks.PipelineConfig(seed=args.seed)
    if shape not in filters:
        filters[shape] = attacks.train_pipeline_filter(pipe_cfg, shape)
    out = attacks.apply_spectral_filter(img, filters[shape])
    if method in ("refine", "colorxfer"):
        refine_cfg = pipe_cfg.refine
        if args.steps is not None:
            refine_cfg = replace(refine_cfg, steps=args.steps)
        out = attacks.refine(out, img, refine_cfg)
    if method == "colorxfer":
        out = attacks.color_contrast_transfer(out, img)
    return out


def _cmd_attack(args):
    inputs = _load_inputs(args.inputs)
    images = []
    rows = []
    failures = 0
    for src in inputs:
        images.append(load_image(src))

    if args.method == "auto":
        cfg = attacks.PipelineConfig(seed=args.seed)
        attacked, records = attacks.blackbox_pipeline(images, cfg, workers=args.workers)
        for src, rec in zip(inputs, records):
            row = {
                "image": str(src),
                "cluster": rec.label,
                "scores": rec.scores,
                "route": rec.route,
            }
            if rec.error:
                row["error"] = rec.error
                failures += 1
            rows.append(row)
    else:
        attacked = []
        filters = {}
        for idx, (src, img) in enumerate(zip(inputs, images)):
            row = {"image": str(src), "method": args.method}
            try:
                out = _attack_one(img, args.method, args, filters, idx)
            except Exception as exc:
                failures += 1
                row["error"] = f"{exc}"
                out = img
            attacked.append(out)
            rows.append(row)

    for src, out in zip(inputs, attacked):
        dst = _out_path(args.out, src, len(inputs))
        save_image(dst, out)
        print(f"{src} -> {dst}")
    if args.manifest:
        _write_json(args.manifest, rows)
    return 2 if failures else 0


def _spectrum_image(img):
    """Normalized centered log-magnitude as a gray RGB image."""
    mag = centered_log_magnitude(fft2(img))
    top = mag.max()
    if top > 0:
        mag = mag / top
    return np.repeat(mag[..., None], 3, axis=2)


def _cmd_cluster(args):
    inputs = _load_inputs(args.inputs)
    thresholds = tuple(args.thresholds) if args.thresholds else DEFAULT_THRESHOLDS
    rows = []
    failures = 0
    for src in inputs:
        row = {"image": str(src)}
        try:
            img = load_image(src)
            scores = artifact_scores(img)
            row["scores"] = {
                "boundary": scores.boundary,
                "ring": scores.ring,
                "square": scores.square,
            }
            row["label"] = classify_cluster(scores, thresholds)
            if args.spectra:
                spectra = Path(args.spectra)
                spectra.mkdir(parents=True, exist_ok=True)
                dst = spectra / f"{src.stem}_spectrum.png"
                save_image(dst, _spectrum_image(img))
                row["spectrum"] = str(dst)
        except Exception as exc:
            failures += 1
            row["error"] = f"{exc}"
        rows.append(row)
        label = row.get("label", "ERROR")
        print(f"{src}  {label}")
    if args.json:
        _write_json(args.json, rows)
    return 2 if failures else 0


def _cmd_calibrate(args):
    key, message = _resolve_key(args, require_message=True)
    detector = harness.make_detector(key, message)
    threshold = harness.calibrate_threshold(
        detector, n=args.n, fpr=args.fpr, size=args.size, seed=args.seed
    )
    doc = {
        "value": threshold.value,
        "fpr_target": threshold.fpr_target,
        "calibration_n": threshold.calibration_n,
        "family": threshold.family,
    }
    if args.out:
        _write_json(args.out, doc)
    print(json.dumps(doc))
    return 0


def _cmd_evaluate(args):
    cfg = harness.ExperimentConfig()
    if args.config:
        with open(args.config) as f:
            cfg = harness.config_from_dict(json.load(f), base=cfg)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.n is not None:
        overrides["n_images"] = args.n
    if args.threshold is not None:
        overrides["threshold"] = args.threshold
    if overrides:
        cfg = replace(cfg, **overrides)
    report = harness.run_experiment(cfg, workers=args.workers)
    harness.write_report(report, json_path=args.json, csv_path=args.csv)
    print(
        f"detection {report.detection_score:.4f}  "
        f"quality_aggregate {report.quality_aggregate:.4f}  "
        f"total {report.total:.4f}  "
        f"failures {report.partial_failures}"
    )
    return 2 if report.partial_failures else 0


def _cmd_report(args):
    doc = harness.load_report(args.input)
    q = doc["quality"]
    print(f"images            {len(doc['per_image'])}")
    print(f"detection_score   {doc['detection_score']:.4f}")
    print(f"psnr/ssim/nmi     {q['psnr']:.2f} / {q['ssim']:.4f} / {q['nmi']:.4f}")
    print(f"quality_aggregate {doc['quality_aggregate']:.4f}")
    print(f"total             {doc['total']:.4f}")
    thr = doc["threshold"]
    print(f"threshold         {thr['value']:.4f} (fpr {thr['fpr_target']}, n {thr['calibration_n']})")
    print(f"partial_failures  {doc['partial_failures']}")
    routes = {}
    for row in doc["per_image"]:
        name = row.get("route", row.get("dressing", "?"))
        routes[name] = routes.get(name, 0) + 1
    for name in sorted(routes):
        print(f"  {routes[name]:4d}  {name}")
    if args.csv:
        rows = doc["per_image"]
        fieldnames = sorted({k for row in rows for k in row})
        with open(args.csv, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames)
            writer.writeheader()
            writer.writerows(rows)
    if args.plot:
        _plot_report(doc, args.plot)
        print(f"plot -> {args.plot}")
    return 0


def _plot_report(doc, path):
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise _UsageError(f"--plot needs matplotlib ({exc})")
    rows = doc["per_image"]
    dists = [row["distance"] for row in rows]
    aggs = [row["aggregate"] for row in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.hist(dists, bins=30, color="#305080")
    ax1.axvline(doc["threshold"]["value"], color="red", linestyle="--", label="threshold")
    ax1.set_xlabel("detector distance")
    ax1.set_ylabel("images")
    ax1.legend()
    ax2.hist(aggs, bins=30, color="#806030")
    ax2.set_xlabel("quality aggregate")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# Parser

def _add_key_options(sub, with_generation=True):
    sub.add_argument("--key", help="key JSON file")
    sub.add_argument("--family", choices=FAMILIES, help="create a key of this family")
    sub.add_argument("--amplitude", type=float, help="override the family default")
    sub.add_argument("--message", help="hex message file (spread-spectrum)")
    if with_generation:
        sub.add_argument(
            "--random-message",
            type=int,
            nargs="?",
            const=DEFAULT_MESSAGE_BITS,
            help=f"draw a random message (default {DEFAULT_MESSAGE_BITS} bits)",
        )
        sub.add_argument("--save-key", help="write the key used to this JSON file")
        sub.add_argument("--save-message", help="write the message used to this hex file")


def build_parser():
    parser = _Parser(prog="wm", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("embed", help="watermark PNG images")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="PNG")
    p.add_argument("--out", required=True, help="output file or directory")
    p.add_argument("--seed", type=int, default=0, help="seed for key/message creation")
    _add_key_options(p)
    p.set_defaults(fn=_cmd_embed)

    p = subs.add_parser("decode", help="decode or detect a watermark")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="PNG")
    p.add_argument("--json", help="write per-image results to this JSON file")
    p.add_argument("--seed", type=int, default=0, help="seed for key creation")
    _add_key_options(p)
    p.set_defaults(fn=_cmd_decode)

    p = subs.add_parser("attack", help="run a removal attack")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="PNG")
    p.add_argument("--out", required=True, help="output file or directory")
    p.add_argument(
        "--method",
        default="auto",
        choices=("translate", "filter", "regen", "refine", "colorxfer", "auto"),
    )
    p.add_argument("--dx", type=int, default=7, help="translate: column shift")
    p.add_argument("--strength", type=float, default=0.16, help="regen: noise level")
    p.add_argument("--passes", type=int, default=1, help="regen: repetitions")
    p.add_argument("--steps", type=int, help="refine: gradient steps")
    p.add_argument("--seed", type=int, default=0, help="master seed for attack RNG")
    p.add_argument("--workers", type=int, default=1, help="auto: thread count")
    p.add_argument("--manifest", help="write a per-image JSON manifest")
    p.set_defaults(fn=_cmd_attack)

    p = subs.add_parser("cluster", help="score artifact signatures and classify")
    p.add_argument("--in", dest="inputs", nargs="+", required=True, metavar="PNG")
    p.add_argument("--json", help="write the manifest to this JSON file")
    p.add_argument("--spectra", help="directory for log-magnitude spectrum PNGs")
    p.add_argument(
        "--thresholds",
        type=float,
        nargs=3,
        metavar=("BOUNDARY", "RING", "SQUARE"),
        help=f"cluster thresholds (default {DEFAULT_THRESHOLDS})",
    )
    p.set_defaults(fn=_cmd_cluster)

    p = subs.add_parser("calibrate", help="fix a detection threshold at a target FPR")
    p.add_argument("--n", type=int, default=10000, help="calibration corpus size")
    p.add_argument("--fpr", type=float, default=0.001, help="target false positive rate")
    p.add_argument("--size", type=int, default=128, help="calibration image size")
    p.add_argument("--seed", type=int, default=0, help="calibration corpus seed")
    p.add_argument("--out", help="write the threshold to this JSON file")
    _add_key_options(p)
    p.set_defaults(fn=_cmd_calibrate)

    p = subs.add_parser("evaluate", help="run a full experiment and write reports")
    p.add_argument("--config", help="experiment config JSON file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--n", type=int, help="override the number of images")
    p.add_argument("--threshold", type=float, help="skip calibration, use this value")
    p.add_argument("--workers", type=int, default=1, help="thread count")
    p.add_argument("--json", help="write the report JSON here")
    p.add_argument("--csv", help="write per-image CSV rows here")
    p.set_defaults(fn=_cmd_evaluate)

    p = subs.add_parser("report", help="summarize a report JSON")
    p.add_argument("--in", dest="input", required=True, metavar="JSON")
    p.add_argument("--csv", help="re-emit per-image CSV rows")
    p.add_argument("--plot", help="write distance/quality histograms to this PNG")
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
