"""Command-line front door: generate, init-weights, probe report, serve.

Exit codes: 0 success, 2 usage or bad input, 3 model-format error,
4 capacity exceeded.  Diagnostics go to stderr; generated text (or the
JSON result with --json) goes to stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import tokenizer
from .context import build_context, mask_for
from .errors import (
    BoundsError,
    CapacityError,
    EmptySelectionError,
    ShapeError,
    SinkTokenError,
    VocabError,
    WeightFormatError,
)
from .guidance import GuidanceConfig, decode, vanilla_decode
from .model import TransformerModel
from .probe import band_gap, contribution, downsample_map
from .weights import ModelConfig, load_weights, save_weights, seeded_init

EXIT_USAGE = 2
EXIT_MODEL_FORMAT = 3
EXIT_CAPACITY = 4


def _config_path_for(model_path: str, override: str | None) -> Path:
    if override:
        return Path(override)
    return Path(str(model_path) + ".json")


def _load_model(args) -> TransformerModel:
    cfg_path = _config_path_for(args.model, getattr(args, "config", None))
    if not cfg_path.exists():
        raise WeightFormatError(f"model config not found at {cfg_path}")
    config = ModelConfig.load(cfg_path)
    weights = load_weights(args.model, config)
    return TransformerModel(config, weights)


def _parse_highlight(value: str) -> tuple[int, int]:
    try:
        a, b = value.split(":")
        return int(a), int(b)
    except ValueError as exc:
        raise BoundsError(f"bad --highlight range {value!r}, expected A:B") from exc


def _load_patches(path, config) -> np.ndarray:
    data = json.loads(Path(path).read_text())
    grid = int(data["grid"])
    if grid != config.patch_grid:
        raise ShapeError(f"patch grid {grid} does not match model grid {config.patch_grid}")
    feats = np.asarray(data["features"], dtype=np.float32)
    return feats


def _cmd_gen(args) -> int:
    model = _load_model(args)
    text = args.prompt
    _, offsets = tokenizer.encode(text)

    image_features = None
    patch_bits = None
    if args.image:
        image_features = _load_patches(args.image, model.config)
        if args.region:
            region = json.loads(Path(args.region).read_text())
            patch_bits = np.asarray(region["bits"], dtype=np.uint8)
    elif args.region:
        raise BoundsError("--region requires --image")

    context = build_context(model, text=text, image_features=image_features)
    token_spans = []
    for cs, ce in args.highlight or []:
        span = tokenizer.align_span(offsets, cs, ce)
        token_spans.append((span.token_start, span.token_end))
    mask = mask_for(context.layout, token_spans, patch_bits)

    capture = bool(args.probe)
    if args.vanilla:
        result = vanilla_decode(model, context, args.max_tokens, capture=capture)
    else:
        cfg = GuidanceConfig(
            alpha=args.alpha, beta=args.beta, gamma=args.gamma, max_new_tokens=args.max_tokens
        )
        result = decode(model, context, mask, cfg, capture=capture)

    if args.probe:
        snap = result.snapshot
        avg = snap.averaged()
        layer0 = snap.averaged(layers=[0])
        report = {
            "context_len": snap.context_len,
            "mask": [int(b) for b in mask.bits],
            "tokens": result.tokens,
            "averaged_map": [[float(x) for x in row] for row in avg],
            "layer0_map": [[float(x) for x in row] for row in layer0],
            "downsampled": [[float(x) for x in row] for row in downsample_map(avg)],
        }
        Path(args.probe).write_text(json.dumps(report))

    if args.json:
        print(json.dumps(result.to_json_dict()))
    else:
        print(result.text)
    return 0


def _cmd_init_weights(args) -> int:
    config = ModelConfig.load(args.config)
    ws = seeded_init(config, args.seed)
    save_weights(ws, args.out)
    config.save(str(args.out) + ".json")
    return 0


def _cmd_probe(args) -> int:
    data = json.loads(Path(args.infile).read_text())
    avg = np.asarray(data["averaged_map"], dtype=np.float64)
    context_len = int(data["context_len"])
    mask_bits = np.asarray(data.get("mask", [0] * context_len), dtype=np.uint8)
    if not args.report:
        print("ok")
        return 0
    bg = band_gap(avg, context_len, exclude_sink=True)
    _, mean = contribution(avg, mask_bits[:context_len])
    ratio = bg.ratio
    print(f"G_x: {bg.gx:.6f}")
    print(f"G_y: {bg.gy:.6f}")
    print(f"G_x/G_y: {'inf' if np.isinf(ratio) else 'n/a' if np.isnan(ratio) else f'{ratio:.6f}'}")
    print(f"contribution mean: {mean:.6f}")
    return 0


def _cmd_serve(args) -> int:
    from .service import run_server

    run_server(
        model_path=args.model,
        config_path=_config_path_for(args.model, args.config),
        port=args.port,
        max_sessions=args.max_sessions,
        ui_dir=args.ui,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hl", description="Highlight-guided text generation")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate with optional highlights")
    gen.add_argument("--model", required=True, help="THW1 weight file")
    gen.add_argument("--config", help="model config JSON (default: <model>.json)")
    gen.add_argument("--prompt", required=True)
    gen.add_argument(
        "--highlight",
        action="append",
        type=_parse_highlight,
        metavar="A:B",
        help="byte range of the prompt to highlight; repeatable",
    )
    gen.add_argument("--image", help="PATCHES.json with {grid, features}")
    gen.add_argument("--region", help="MASK.json with {bits}")
    gen.add_argument("--alpha", type=float, default=0.01)
    gen.add_argument("--beta", type=float, default=2.0)
    gen.add_argument("--gamma", type=float, default=1.3)
    gen.add_argument("--max-tokens", type=int, default=32)
    gen.add_argument("--vanilla", action="store_true", help="ignore guidance (baseline)")
    gen.add_argument("--probe", metavar="OUT.json", help="write attention snapshot report")
    gen.add_argument("--json", action="store_true", help="print the full GenerationResult")
    gen.set_defaults(func=_cmd_gen)

    initw = sub.add_parser("init-weights", help="create seeded toy weights")
    initw.add_argument("--config", required=True)
    initw.add_argument("--seed", type=int, required=True)
    initw.add_argument("--out", required=True)
    initw.set_defaults(func=_cmd_init_weights)

    probe = sub.add_parser("probe", help="report statistics from a probe snapshot")
    probe.add_argument("--in", dest="infile", required=True)
    probe.add_argument("--report", action="store_true")
    probe.set_defaults(func=_cmd_probe)

    serve = sub.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--model", required=True)
    serve.add_argument("--config", help="model config JSON (default: <model>.json)")
    serve.add_argument("--port", type=int, default=7878)
    serve.add_argument("--max-sessions", type=int, default=32)
    serve.add_argument("--ui", help="static UI directory to mount at /")
    serve.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except WeightFormatError as exc:
        print(f"hl: model format error: {exc}", file=sys.stderr)
        return EXIT_MODEL_FORMAT
    except CapacityError as exc:
        print(f"hl: capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (
        BoundsError,
        SinkTokenError,
        EmptySelectionError,
        ShapeError,
        VocabError,
        FileNotFoundError,
        json.JSONDecodeError,
        KeyError,
        ValueError,
    ) as exc:
        print(f"hl: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
