"""Command-line surface: train, stylize, blend, manage styles, inspect, serve.

Every failure exits nonzero with a single machine-parsable stderr line::

    error <code>: <message>

where ``<code>`` is the stable slug carried by the raised error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .autodiff import Tensor
from .checkpoint import (
    CheckpointBundle,
    export_style,
    import_style,
    load_checkpoint,
    save_checkpoint,
)
from .errors import ConfigError, PasticheError, UnknownStyleError
from .imageio import center_crop, load_image, resize_smaller_side, save_image
from .losses import (
    ExtractorConfig,
    FeatureExtractor,
    LossWeights,
    gram_targets,
    style_loss,
    total_loss,
)
from .network import NetworkConfig, build_network, count_parameters, forward
from .pixelopt import optimize_pixels
from .styles import add_style_row, blend_styles, select_style
from .training import AdamParams, TrainConfig, train

_TRAIN_KEYS = (
    "steps", "corpus", "styles", "batch_size", "image_size", "seed",
    "log_every", "lambda_c", "lambda_s", "mode", "finetune_name", "eval_batches",
)


def _parse_weights(text: str) -> dict[str, float]:
    weights: dict[str, float] = {}
    for part in text.split(","):
        name, _, value = part.partition("=")
        if not name or not value:
            raise ConfigError(f"weight {part!r} is not name=value")
        try:
            weights[name] = float(value)
        except ValueError:
            raise ConfigError(f"weight {part!r} has a non-numeric value") from None
    return weights


def _style_grams(fx: FeatureExtractor, styles: dict[str, str]) -> dict[str, dict]:
    return {name: gram_targets(fx, load_image(path)) for name, path in styles.items()}


def _cmd_train(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {args.config} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if "out" not in raw:
        raise ConfigError("config needs an 'out' checkpoint path")

    net_config = NetworkConfig.from_dict(raw.get("network", {}))
    fx_config = ExtractorConfig.from_dict(
        {**ExtractorConfig().to_dict(), **raw.get("extractor", {})}
    )
    try:
        adam = AdamParams(**raw.get("adam", {}))
    except TypeError as exc:
        raise ConfigError(f"bad adam config: {exc}") from None
    config = TrainConfig(
        adam=adam, **{k: raw[k] for k in _TRAIN_KEYS if k in raw}
    )

    if raw.get("init_ckpt"):
        bundle = load_checkpoint(raw["init_ckpt"])
        model = bundle.model
        fx = bundle.feature_extractor()
        if config.mode == "finetune" and config.finetune_name not in model.bank.style_names:
            add_style_row(model.bank, config.finetune_name, seed=config.seed)
    else:
        if config.mode == "finetune":
            raise ConfigError("finetune mode needs an 'init_ckpt' to start from")
        model = build_network(net_config, sorted(config.styles), seed=config.seed)
        fx = FeatureExtractor.from_seed(fx_config)

    model, curve = train(model, fx, config)
    grams = _style_grams(fx, dict(config.styles))
    bundle = CheckpointBundle(model, fx.config, grams)
    save_checkpoint(bundle, raw["out"])
    curve_path = raw.get("curve_out", str(raw["out"]) + ".curve.csv")
    curve.write(curve_path)
    final = curve.final
    print(
        f"trained steps={final.step} total={final.total:.6f} "
        f"ckpt={raw['out']} curve={curve_path}"
    )
    return 0


def _prepare_content(args, config: NetworkConfig) -> Tensor:
    image = load_image(args.input)
    if args.resize:
        image = resize_smaller_side(image, args.resize)
    if args.crop:
        image = center_crop(image, args.crop)
    _, _, h, w = image.shape
    if h % 4 or w % 4:
        raise ConfigError(
            f"image is {h}x{w} after preprocessing; the network needs "
            "multiples of 4 (use --resize/--crop)"
        )
    return image


def _cmd_stylize(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    content = _prepare_content(args, bundle.model.config)
    vector = select_style(bundle.model.bank, args.style)
    out = forward(bundle.model, content, [vector])
    save_image(out, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_blend(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    weights = _parse_weights(args.weights)
    vector = blend_styles(bundle.model.bank, weights)
    content = _prepare_content(args, bundle.model.config)
    out = forward(bundle.model, content, [vector])
    save_image(out, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_add_style(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    fx = bundle.feature_extractor()
    add_style_row(bundle.model.bank, args.name, seed=args.seed)
    config = TrainConfig(
        steps=args.steps,
        corpus=args.corpus,
        styles={args.name: args.style_image},
        batch_size=args.batch_size,
        image_size=args.image_size,
        seed=args.seed,
        mode="finetune",
        finetune_name=args.name,
    )
    _, curve = train(bundle.model, fx, config)
    bundle.grams[args.name] = gram_targets(fx, load_image(args.style_image))
    out = args.out or args.ckpt
    save_checkpoint(bundle, out)
    print(
        f"added style={args.name} steps={args.steps} "
        f"total={curve.final.total:.6f} ckpt={out}"
    )
    return 0


def _cmd_pixel_optimize(args) -> int:
    fx = FeatureExtractor.from_seed()
    content = load_image(args.content)
    style = load_image(args.style)
    image, trace = optimize_pixels(
        fx,
        content,
        style,
        steps=args.steps,
        lambda_s=args.lambda_s,
        lambda_c=args.lambda_c,
        init=args.init,
        seed=args.seed,
        adam=AdamParams(alpha=args.step_size),
    )
    save_image(image, args.out)
    print(
        f"optimized steps={args.steps} total={trace[-1].total:.6f} "
        f"style={trace[-1].style_loss:.6f} content={trace[-1].content_loss:.6f} "
        f"out={args.out}"
    )
    return 0


def _cmd_losses(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    fx = bundle.feature_extractor()
    pastiche = load_image(args.pastiche)
    content = load_image(args.content)
    style = load_image(args.style)
    _, report = total_loss(
        fx, LossWeights({"style": 1.0}), pastiche, content, style, "style"
    )
    print(json.dumps(report.as_dict(), sort_keys=True))
    return 0


def _cmd_inspect(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    counts = count_parameters(bundle.model)
    print(
        f"shared={counts.shared} per_style={counts.per_style} "
        f"fraction={counts.fraction:.2%} n_styles={counts.n_styles} "
        f"total={counts.total}"
    )
    names = bundle.model.bank.style_names
    print(f"styles={','.join(names) if names else '(none)'}")
    print(f"config={json.dumps(bundle.model.config.to_dict(), sort_keys=True)}")
    cached = sorted(bundle.grams)
    print(f"loss_caches={','.join(cached) if cached else '(none)'}")
    return 0


def _cmd_export_style(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    export_style(bundle.model, args.name, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_import_style(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    name = import_style(bundle.model, args.style_file, rename=args.rename)
    out = args.out or args.ckpt
    save_checkpoint(bundle, out)
    print(f"imported style={name} ckpt={out}")
    return 0


def _cmd_sweep(args) -> int:
    bundle = load_checkpoint(args.ckpt)
    model = bundle.model
    for name in (args.style_a, args.style_b):
        if name not in model.bank.style_names:
            raise UnknownStyleError(f"style {name!r} not in checkpoint")
        if name not in bundle.grams:
            raise ConfigError(
                f"checkpoint has no cached style statistics for {name!r}; "
                "re-save it with train or add-style"
            )
    if args.steps < 2:
        raise ConfigError("sweep needs at least 2 steps")
    fx = bundle.feature_extractor()
    content = _prepare_content(args, model.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(args.steps):
        alpha = i / (args.steps - 1)
        weights = {args.style_a: alpha, args.style_b: 1.0 - alpha}
        vector = blend_styles(model.bank, weights)
        pastiche = forward(model, content, [vector])
        frame = out_dir / f"frame_{i:03d}.png"
        save_image(pastiche, frame)
        loss_a, _ = style_loss(fx, pastiche, bundle.grams[args.style_a])
        loss_b, _ = style_loss(fx, pastiche, bundle.grams[args.style_b])
        records.append((alpha, float(loss_a.data), float(loss_b.data)))
        print(
            f"alpha={alpha:.4f} loss_a={records[-1][1]:.6f} "
            f"loss_b={records[-1][2]:.6f} frame={frame}"
        )
    csv_path = out_dir / "sweep.csv"
    lines = ["alpha,style_loss_a,style_loss_b"]
    lines += [f"{a},{la},{lb}" for a, la, lb in records]
    csv_path.write_text("\n".join(lines) + "\n")
    print(f"wrote {csv_path}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, _, port_text = args.bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise ConfigError(f"--bind wants host:port, got {args.bind!r}")
    bundle = load_checkpoint(args.ckpt)
    app = create_app(bundle)
    uvicorn.run(app, host=host, port=int(port_text), log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pastiche",
        description="Multi-style pastiche network: training, stylization, blending.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a JSON config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_train)

    def add_content_flags(p, resize_default=None, crop_default=None):
        p.add_argument("--in", dest="input", required=True)
        p.add_argument("--resize", type=int, default=resize_default)
        p.add_argument("--crop", type=int, default=crop_default)

    p = sub.add_parser("stylize", help="run one named style over an image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--style", required=True)
    add_content_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_stylize)

    p = sub.add_parser("blend", help="stylize with a convex mix of styles")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--weights", required=True, help="name=w,name=w,... summing to 1")
    add_content_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_blend)

    p = sub.add_parser("add-style", help="fine-tune a new style into a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--style-image", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--corpus", required=True, help="content image directory")
    p.add_argument("--out", help="write here instead of updating --ckpt")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--image-size", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_add_style)

    p = sub.add_parser("pixel-optimize", help="optimize pixels directly (no network)")
    p.add_argument("--content", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda-s", type=float, default=1.0)
    p.add_argument("--lambda-c", type=float, default=1.0)
    p.add_argument("--init", choices=("content", "random"), default="content")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step-size", type=float, default=0.01)
    p.set_defaults(func=_cmd_pixel_optimize)

    p = sub.add_parser("losses", help="print the loss report for a pastiche")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--content", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--pastiche", required=True)
    p.set_defaults(func=_cmd_losses)

    p = sub.add_parser("inspect", help="print parameter counts and styles")
    p.add_argument("--ckpt", required=True)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("export-style", help="write one style's parameters to a file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_style)

    p = sub.add_parser("import-style", help="add an exported style to a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--style-file", required=True)
    p.add_argument("--rename")
    p.add_argument("--out", help="write here instead of updating --ckpt")
    p.set_defaults(func=_cmd_import_style)

    p = sub.add_parser("sweep", help="interpolate two styles and report losses")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--style-a", required=True)
    p.add_argument("--style-b", required=True)
    add_content_flags(p)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--out", required=True, help="directory for frames and sweep.csv")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("serve", help="run the HTTP blending service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PasticheError as exc:
        print(f"error {exc.code}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error bad-path: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
