"""Command-line surface: attack, baseline, render and eval workflows.

Every flag has a config-file equivalent (flat key=value lines, '#' comments);
an explicit flag wins over the config file, which wins over the built-in
defaults. The environment variable ITA_ENDPOINT supplies the default remote
endpoint. stdout carries one machine-readable JSON summary line; diagnostics
go to stderr.

Exit codes: 0 attack succeeded (or command completed), 2 usage error,
3 attack completed without flipping the label, 10 input/output or format
error, 11 provider transport/protocol error, 12 internal numerical error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .attack import AttackConfig, AttackResult, run_attack, run_random_baseline
from .errors import (
    EvaluationFaultError,
    GlareError,
    ImageFormatError,
    InvalidArgumentError,
    LabelFileError,
    NumericalError,
    ProtocolError,
    ReportSchemaError,
    TransportError,
)
from .lightfield import LightingConfig, RenderParams, relight, render_light_map
from .objective import similarity_vector
from .persistence import load_image, load_labels, save_image, save_light_map, save_report
from .providers import LocalEmbeddingProvider, RemoteEmbeddingProvider, RemoteEndpoint

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_FLIP = 3
EXIT_IO = 10
EXIT_TRANSPORT = 11
EXIT_NUMERICAL = 12

ENDPOINT_ENV_VAR = "ITA_ENDPOINT"

ADVERSARIAL_IMAGE_NAME = "adversarial.png"
LIGHT_MAP_NAME = "light_map.png"
REPORT_NAME = "report.json"


class UsageError(Exception):
    pass


def _eprint(*args) -> None:
    print(*args, file=sys.stderr)


def _parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                if "=" not in text:
                    raise UsageError(f"{path}:{lineno}: expected key=value, got {text!r}")
                key, value = text.split("=", 1)
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    return values


_BOOL_STRINGS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _coerce(key: str, raw: str, kind: type):
    if kind is bool:
        if raw.lower() not in _BOOL_STRINGS:
            raise UsageError(f"config key {key}: expected a boolean, got {raw!r}")
        return _BOOL_STRINGS[raw.lower()]
    try:
        return kind(raw)
    except ValueError as exc:
        raise UsageError(f"config key {key}: expected {kind.__name__}, got {raw!r}") from exc


# Option name -> (AttackConfig field, type). CLI names stay short; config file
# accepts either the option name or the field name.
_CONFIG_KEYS = {
    "lights": ("n_lights", int),
    "pop": ("population", int),
    "iters": ("max_iters", int),
    "patience": ("patience", int),
    "min_delta": ("min_delta", float),
    "alpha": ("alpha", float),
    "beta": ("beta", float),
    "delta": ("dist_threshold", float),
    "ambient": ("ambient_gain", float),
    "seed": ("seed", int),
    "provider": ("provider", str),
    "endpoint": ("endpoint", str),
    "lra": ("lra_enabled", bool),
    "workers": ("workers", int),
}


def _build_attack_config(args: argparse.Namespace) -> AttackConfig:
    file_values = _parse_config_file(args.config) if getattr(args, "config", None) else {}
    kwargs = {}
    for opt, (field_name, kind) in _CONFIG_KEYS.items():
        flag_value = getattr(args, opt.replace("-", "_"), None)
        if flag_value is not None:
            kwargs[field_name] = flag_value
            continue
        raw = file_values.get(opt, file_values.get(field_name))
        if raw is not None:
            kwargs[field_name] = _coerce(opt, raw, kind)
    known = set(_CONFIG_KEYS) | {v[0] for v in _CONFIG_KEYS.values()} | {"draws", "n_draws", "ambient_gain", "snapshot_every"}
    unknown = set(file_values) - known
    if unknown:
        raise UsageError(f"unknown config file keys: {sorted(unknown)}")
    if "endpoint" not in kwargs and os.environ.get(ENDPOINT_ENV_VAR):
        kwargs["endpoint"] = os.environ[ENDPOINT_ENV_VAR]
    try:
        return AttackConfig(**kwargs)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from exc


def _config_file_value(args: argparse.Namespace, key: str, kind: type):
    if getattr(args, "config", None):
        raw = _parse_config_file(args.config).get(key)
        if raw is not None:
            return _coerce(key, raw, kind)
    return None


def _resolve_draws(args: argparse.Namespace, config: AttackConfig) -> int:
    if getattr(args, "draws", None) is not None:
        return args.draws
    from_file = _config_file_value(args, "draws", int)
    if from_file is None:
        from_file = _config_file_value(args, "n_draws", int)
    if from_file is not None:
        return from_file
    return config.population * config.max_iters


def _load_label_set(args: argparse.Namespace):
    labels = load_labels(args.labels)
    return labels


def _resolve_truth(labels, truth: str) -> int:
    try:
        return labels.index_of(truth)
    except LabelFileError as exc:
        raise UsageError(str(exc)) from exc


def _make_provider(config: AttackConfig):
    if config.provider == "local":
        return LocalEmbeddingProvider()
    return RemoteEmbeddingProvider(RemoteEndpoint(base_url=config.endpoint or ""))


def _write_outputs(result: AttackResult, out_dir: str) -> dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "adversarial_image": os.path.join(out_dir, ADVERSARIAL_IMAGE_NAME),
        "light_map": os.path.join(out_dir, LIGHT_MAP_NAME),
        "report": os.path.join(out_dir, REPORT_NAME),
    }
    save_image(result.adversarial_image, paths["adversarial_image"])
    cfg = result.lambda_star if result.lambda_star is not None else LightingConfig()
    img = result.adversarial_image
    save_light_map(render_light_map(cfg, img.width, img.height), paths["light_map"])
    save_report(result.to_report(), paths["report"])
    return paths


def _summary_line(payload: dict) -> None:
    print(json.dumps(payload))


def _snapshot_writer(out_dir: str, every: int, image, render_params):
    if every <= 0:
        return None
    snap_dir = os.path.join(out_dir, "snapshots")

    def write(iteration: int, best_cfg) -> None:
        if iteration % every == 0:
            os.makedirs(snap_dir, exist_ok=True)
            save_image(
                relight(image, best_cfg, render_params),
                os.path.join(snap_dir, f"iter_{iteration:04d}.png"),
            )

    return write


def _cmd_attack(args: argparse.Namespace) -> int:
    config = _build_attack_config(args)
    labels = _load_label_set(args)
    truth_index = _resolve_truth(labels, args.truth)
    image = load_image(args.image)
    provider = _make_provider(config)
    result = run_attack(
        image,
        labels.labels,
        truth_index,
        config,
        provider=provider,
        on_iteration=_snapshot_writer(args.out_dir, args.snapshot_every, image, config.render_params()),
    )
    paths = _write_outputs(result, args.out_dir)
    _summary_line(
        {
            "command": "attack",
            "success": result.success,
            "clean_label": result.clean_prediction.label,
            "adversarial_label": result.adversarial_prediction.label,
            "best_fitness": result.trajectory[-1].best_fitness if result.trajectory else None,
            "iterations": len(result.trajectory),
            "evaluations": result.evaluations,
            "stop_reason": result.stop_reason,
            "out_dir": args.out_dir,
            "report": paths["report"],
        }
    )
    return EXIT_OK if result.success else EXIT_NO_FLIP


def _cmd_baseline(args: argparse.Namespace) -> int:
    config = _build_attack_config(args)
    labels = _load_label_set(args)
    truth_index = _resolve_truth(labels, args.truth)
    image = load_image(args.image)
    n_draws = _resolve_draws(args, config)
    result = run_random_baseline(image, labels.labels, truth_index, config, n_draws=n_draws)
    paths = _write_outputs(result, args.out_dir)
    _summary_line(
        {
            "command": "baseline",
            "success": result.success,
            "clean_label": result.clean_prediction.label,
            "adversarial_label": result.adversarial_prediction.label,
            "best_fitness": result.trajectory[-1].best_fitness if result.trajectory else None,
            "draws": n_draws,
            "evaluations": result.evaluations,
            "out_dir": args.out_dir,
            "report": paths["report"],
        }
    )
    return EXIT_OK if result.success else EXIT_NO_FLIP


def _parse_lights_spec(spec: str) -> LightingConfig:
    try:
        numbers = [float(tok) for tok in spec.replace(",", " ").split()]
    except ValueError as exc:
        raise UsageError(f"--lights-spec: not a number list: {exc}") from exc
    if not numbers or len(numbers) % 4 != 0:
        raise UsageError(
            f"--lights-spec needs 4 numbers per light (x,y,intensity,radius), got {len(numbers)}"
        )
    try:
        return LightingConfig.from_vector(np.asarray(numbers))
    except InvalidArgumentError as exc:
        raise UsageError(f"--lights-spec: {exc}") from exc


def _cmd_render(args: argparse.Namespace) -> int:
    cfg = _parse_lights_spec(args.lights_spec)
    image = load_image(args.image)
    ambient = args.ambient
    if ambient is None:
        ambient = _config_file_value(args, "ambient", float)
    try:
        params = RenderParams(ambient_gain=ambient) if ambient is not None else RenderParams()
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from exc
    os.makedirs(args.out_dir, exist_ok=True)
    relit_path = os.path.join(args.out_dir, "relit.png")
    map_path = os.path.join(args.out_dir, LIGHT_MAP_NAME)
    save_image(relight(image, cfg, params), relit_path)
    save_light_map(render_light_map(cfg, image.width, image.height), map_path)
    _summary_line({"command": "render", "relit": relit_path, "light_map": map_path})
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    config = _build_attack_config(args)
    labels = _load_label_set(args)
    image = load_image(args.image)
    provider = _make_provider(config)
    sims = similarity_vector(provider.embed_image(image), provider.embed_texts(labels.labels))
    shifted = np.exp(sims - sims.max())
    probs = shifted / shifted.sum()
    order = np.argsort(-sims, kind="stable")
    _eprint(f"{'rank':>4}  {'label':<16} {'cosine':>9}  {'softmax':>9}")
    for rank_pos, idx in enumerate(order, 1):
        _eprint(f"{rank_pos:>4}  {labels.labels[idx]:<16} {sims[idx]:>9.6f}  {probs[idx]:>9.6f}")
    top = int(order[0])
    _summary_line(
        {
            "command": "eval",
            "top_label": labels.labels[top],
            "top_similarity": float(sims[top]),
            "top_softmax": float(probs[top]),
            "labels": len(labels.labels),
        }
    )
    return EXIT_OK


def _add_common_flags(parser: argparse.ArgumentParser, with_out_dir: bool = True) -> None:
    parser.add_argument("--image", required=True, help="input image (PNG or P6 PPM)")
    parser.add_argument("--config", help="flat key=value config file")
    if with_out_dir:
        parser.add_argument("--out-dir", default="out", help="output directory")


def _add_attack_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--labels", default="builtin:coco30", help="label file or builtin:<name>")
    parser.add_argument("--truth", required=True, help="ground-truth label string")
    parser.add_argument("--lights", type=int, help="number of point lights")
    parser.add_argument("--pop", type=int, help="candidates per iteration")
    parser.add_argument("--iters", type=int, help="iteration budget")
    parser.add_argument("--patience", type=int, help="stagnant iterations before stopping")
    parser.add_argument("--min-delta", type=float, help="stagnation threshold on best fitness")
    parser.add_argument("--alpha", type=float, help="perceptual penalty weight")
    parser.add_argument("--beta", type=float, help="light-distance penalty weight")
    parser.add_argument("--delta", type=float, help="minimum light separation in pixels")
    parser.add_argument("--ambient", type=float, help="renderer ambient gain")
    parser.add_argument("--seed", type=int, help="run seed")
    parser.add_argument("--provider", choices=("local", "remote"), help="embedding provider")
    parser.add_argument("--endpoint", help=f"remote endpoint URL (default ${ENDPOINT_ENV_VAR})")
    parser.add_argument("--lra", action="store_true", default=None, help="enable the extra step-size factor")
    parser.add_argument("--workers", type=int, help="candidate evaluation workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glare",
        description="Search for adversarial lighting that flips an image-text classifier.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p_attack = sub.add_parser("attack", help="run the optimized illumination attack")
    _add_common_flags(p_attack)
    _add_attack_flags(p_attack)
    p_attack.add_argument("--snapshot-every", type=int, default=0, help="write the best image every N iterations")
    p_attack.set_defaults(func=_cmd_attack)

    p_base = sub.add_parser("baseline", help="random illumination baseline at matched budget")
    _add_common_flags(p_base)
    _add_attack_flags(p_base)
    p_base.add_argument("--draws", type=int, help="number of uniform draws (default pop*iters)")
    p_base.set_defaults(func=_cmd_baseline)

    p_render = sub.add_parser("render", help="relight an image with an explicit configuration")
    _add_common_flags(p_render)
    p_render.add_argument("--lights-spec", required=True, help="flat 4N numbers: x,y,intensity,radius per light")
    p_render.add_argument("--ambient", type=float, help="renderer ambient gain")
    p_render.set_defaults(func=_cmd_render)

    p_eval = sub.add_parser("eval", help="rank labels for an image by similarity")
    _add_common_flags(p_eval, with_out_dir=False)
    p_eval.add_argument("--labels", default="builtin:coco30", help="label file or builtin:<name>")
    p_eval.add_argument("--provider", choices=("local", "remote"), help="embedding provider")
    p_eval.add_argument("--endpoint", help=f"remote endpoint URL (default ${ENDPOINT_ENV_VAR})")
    p_eval.set_defaults(func=_cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        _eprint(f"usage error: {exc}")
        return EXIT_USAGE
    except (ImageFormatError, LabelFileError, ReportSchemaError, OSError) as exc:
        _eprint(f"i/o error: {exc}")
        return EXIT_IO
    except (TransportError, ProtocolError) as exc:
        _eprint(f"provider error: {exc}")
        return EXIT_TRANSPORT
    except (NumericalError, EvaluationFaultError) as exc:
        _eprint(f"numerical error: {exc}")
        return EXIT_NUMERICAL
    except InvalidArgumentError as exc:
        _eprint(f"usage error: {exc}")
        return EXIT_USAGE
    except GlareError as exc:
        _eprint(f"error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
