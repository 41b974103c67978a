"""Command-line front door: train assets, explain, evaluate, serve."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import torch

from .config import (
    build_attack_config,
    build_refine_config,
    load_config_file,
    load_preset,
    merge_configs,
)
from .diffusion import DenoiserTrainConfig, load_denoiser, save_denoiser, train_denoiser
from .engine import diverse_explanations, explain, write_run_dir
from .engine.runio import dump_json, load_image_png
from .errors import AssetNotFoundError, ConfigurationError, DiffcfError
from .metrics import (
    ClassifierFeatureEncoder,
    evaluate_runs,
    load_twin_view_encoder,
    save_twin_view_encoder,
    train_twin_view_encoder,
)
from .zoo import (
    ClassifierTrainConfig,
    build_builtin_dataset,
    ingest_dataset,
    load_classifier,
    save_classifier,
    train_classifier,
)
from .zoo.datasets import BUILTIN_NAME, ImageDataset, load_dataset_archive, save_dataset_archive

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_NOT_FOUND = 4


def _fail(category: str, message: str) -> None:
    print(f"error: {category}: {message}", file=sys.stderr)


def load_dataset_ref(ref: str) -> ImageDataset:
    """'builtin:curves32' or a path to an ingested dataset archive."""
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        if name != BUILTIN_NAME:
            raise AssetNotFoundError(f"unknown builtin dataset {name!r}")
        return build_builtin_dataset()
    path = Path(ref)
    if not path.exists():
        raise AssetNotFoundError(f"dataset not found: {ref}")
    return load_dataset_archive(path)


def _merged_config(args) -> dict:
    layers = []
    if getattr(args, "preset", None):
        layers.append(load_preset(args.preset))
    if getattr(args, "config", None):
        layers.append(load_config_file(args.config))
    layers.append(_flag_overrides(args))
    return merge_configs(*layers)


_ATTACK_FLAGS = {
    "method": "method",
    "iterations": "num_iterations",
    "step_size": "step_size",
    "lambda_d": "lambda_d",
    "norm": "distance_norm",
    "tau": "tau",
    "respaced_steps": "respaced_steps",
    "anchor": "distance_anchor",
}
_REFINE_FLAGS = {
    "mask_threshold": "mask_threshold",
    "mask_dilation": "mask_dilation",
    "refine_tau": "tau",
    "refine_steps": "respaced_steps",
}


def _flag_overrides(args) -> dict:
    attack = {
        key: getattr(args, flag)
        for flag, key in _ATTACK_FLAGS.items()
        if getattr(args, flag, None) is not None
    }
    refine = {
        key: getattr(args, flag)
        for flag, key in _REFINE_FLAGS.items()
        if getattr(args, flag, None) is not None
    }
    if getattr(args, "seed", None) is not None:
        attack["seed"] = args.seed
    if getattr(args, "no_mask", False):
        refine["apply_mask"] = False
    out: dict = {}
    if attack:
        out["attack"] = attack
    if refine:
        out["refine"] = refine
    return out


def _validated_engine_configs(merged: dict):
    attack = build_attack_config(merged)
    refine = build_refine_config(merged)
    problems = attack.problems() + refine.problems()
    if problems:
        raise ConfigurationError("invalid config: " + "; ".join(problems))
    return attack, refine


def _resolve_instance(args):
    """(image tensor, instance ref string, dataset or None)"""
    if getattr(args, "image", None):
        path = Path(args.image)
        if not path.exists():
            raise AssetNotFoundError(f"image not found: {path}")
        return load_image_png(path), str(path), None
    dataset = load_dataset_ref(args.dataset)
    image, _ = dataset.instance(args.split, args.index)
    return image[None], f"{args.dataset}#{args.split}/{args.index}", dataset


def cmd_train_ddpm(args) -> int:
    merged = _merged_config(args)
    section = dict(merged.get("train", {}).get("ddpm", {}))
    if args.iterations is not None:
        section["train_iterations"] = args.iterations
    if args.max_train_timestep is not None:
        section["max_train_timestep"] = args.max_train_timestep
    if args.seed is not None:
        section["seed"] = args.seed
    known = set(DenoiserTrainConfig.__dataclass_fields__)
    unknown = set(section) - known
    if unknown:
        raise ConfigurationError(f"unknown [train.ddpm] keys: {', '.join(sorted(unknown))}")
    config = DenoiserTrainConfig(**section)

    dataset = load_dataset_ref(args.dataset)
    images, _ = dataset.split(args.split)
    model, summary = train_denoiser(images, config)
    save_denoiser(model, args.out)
    print(
        json.dumps(
            {
                "checkpoint": str(args.out),
                "iterations": config.train_iterations,
                "final_loss": summary.mean_loss(last=50),
                "max_t_sampled": summary.max_t_sampled,
            }
        )
    )
    return EXIT_OK


def cmd_train_classifier(args) -> int:
    merged = _merged_config(args)
    section = dict(merged.get("train", {}).get("classifier", {}))
    if args.epochs is not None:
        section["epochs"] = args.epochs
    if args.seed is not None:
        section["seed"] = args.seed
    known = set(ClassifierTrainConfig.__dataclass_fields__)
    unknown = set(section) - known
    if unknown:
        raise ConfigurationError(f"unknown [train.classifier] keys: {', '.join(sorted(unknown))}")
    config = ClassifierTrainConfig(**section)

    dataset = load_dataset_ref(args.dataset)
    tr_x, tr_y = dataset.split("train")
    va_x, va_y = dataset.split("val")
    model, accuracy = train_classifier(tr_x, tr_y, va_x, va_y, config)
    save_classifier(model, args.out, accuracy=accuracy, class_names=dataset.descriptor.class_names)
    print(json.dumps({"checkpoint": str(args.out), "held_out_accuracy": accuracy}))
    return EXIT_OK


def _load_assets(args):
    for name in ("classifier", "denoiser"):
        path = Path(getattr(args, name))
        if not path.exists():
            raise AssetNotFoundError(f"{name} checkpoint not found: {path}")
    classifier, _ = load_classifier(args.classifier)
    model = load_denoiser(args.denoiser)
    return classifier, model


def cmd_explain(args) -> int:
    attack, refine = _validated_engine_configs(_merged_config(args))
    classifier, model = _load_assets(args)
    x, instance_ref, _ = _resolve_instance(args)

    result = explain(x, args.target, classifier, model, model.base_schedule(), attack, refine)
    assets = {
        "classifier": str(args.classifier),
        "denoiser": str(args.denoiser),
        "instance": instance_ref,
    }
    write_run_dir(result, args.out, seed=attack.seed, assets=assets, canonical=args.canonical)
    print(
        json.dumps(
            {
                "run_dir": str(args.out),
                "flipped": result.flipped,
                "source_label": result.source_label,
                "target_label": result.target_label,
                "mask_coverage": result.mask.coverage,
            }
        )
    )
    return EXIT_OK


def cmd_diversity(args) -> int:
    attack, refine = _validated_engine_configs(_merged_config(args))
    classifier, model = _load_assets(args)
    x, instance_ref, _ = _resolve_instance(args)

    results = diverse_explanations(
        x, args.target, args.k, classifier, model, model.base_schedule(), attack, refine
    )
    out = Path(args.out)
    assets = {
        "classifier": str(args.classifier),
        "denoiser": str(args.denoiser),
        "instance": instance_ref,
    }
    for i, result in enumerate(results):
        write_run_dir(
            result,
            out / f"variant-{i:02d}",
            seed=result.attack_config.seed,
            assets=assets,
            canonical=args.canonical,
        )

    encoder = ClassifierFeatureEncoder(classifier)
    from .metrics import CosineFeatureDistance, diversity as diversity_metric

    sigma = diversity_metric([r.counterfactual for r in results], CosineFeatureDistance(encoder))
    dump_json(
        {
            "schema_version": 1,
            "k": args.k,
            "diversity": sigma,
            "flipped": [r.flipped for r in results],
            "respacings": [r.refine_config.respaced_steps for r in results],
        },
        out / "diversity.json",
    )
    print(json.dumps({"out": str(out), "diversity": sigma}))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    runs_root = Path(args.runs)
    if not runs_root.exists():
        raise AssetNotFoundError(f"runs directory not found: {runs_root}")
    run_dirs = sorted(p.parent for p in runs_root.glob("**/manifest.json"))
    if not run_dirs:
        raise AssetNotFoundError(f"no run directories under {runs_root}")

    classifier = None
    fid_encoder = fs_encoder = s3_encoder = perceptual_encoder = None
    if args.classifier:
        classifier, _ = load_classifier(args.classifier)
        fid_encoder = fs_encoder = perceptual_encoder = ClassifierFeatureEncoder(classifier)
    if args.s3_encoder:
        s3_path = Path(args.s3_encoder)
        if s3_path.exists():
            s3_encoder = load_twin_view_encoder(s3_path)
        elif args.train_missing_encoders:
            from .engine.runio import read_run_dir

            inputs = torch.cat([read_run_dir(d)["input"] for d in run_dirs])
            s3_encoder = train_twin_view_encoder(inputs, seed=args.seed)
            save_twin_view_encoder(s3_encoder, s3_path)
        else:
            raise AssetNotFoundError(
                f"encoder checkpoint not found: {s3_path} (pass --train-missing-encoders to fit one)"
            )

    wanted = set(args.metrics.split(",")) if args.metrics != "all" else {
        "flip_rate", "fid", "sfid", "fs", "s3", "cout", "diversity"
    }
    report = evaluate_runs(
        run_dirs,
        classifier if "cout" in wanted else None,
        fid_encoder=fid_encoder if {"fid", "sfid"} & wanted else None,
        fs_encoder=fs_encoder if "fs" in wanted else None,
        s3_encoder=s3_encoder if "s3" in wanted else None,
        perceptual_encoder=perceptual_encoder if "diversity" in wanted else None,
        cout_steps=args.cout_steps,
        sfid_num_splits=args.sfid_splits,
        seed=args.seed or 0,
    )
    dump_json(report.to_json_dict(), args.out)
    print(json.dumps({"report": str(args.out), "flip_rate": report.flip_rate}))
    return EXIT_OK


def cmd_ingest(args) -> int:
    dataset = ingest_dataset(
        args.dir, args.manifest, strict=not args.lenient, seed=args.seed or 0
    )
    save_dataset_archive(dataset, Path(args.out))
    print(
        json.dumps(
            {
                "dataset": str(args.out),
                "images": int(dataset.images.shape[0]),
                "classes": list(dataset.descriptor.class_names),
                "splits": dataset.descriptor.split_sizes,
            }
        )
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import create_app

    app = create_app(
        data_root=Path(args.data_root),
        compute_slots=args.slots,
        strict_ingestion=args.strict_ingestion,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--preset", help="named preset (see README for the list)")
    p.add_argument("--seed", type=int, help="run seed (echoed into the manifest)")


def _add_knob_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=["pgd", "gd", "cw"], help="attack update rule")
    p.add_argument("--iterations", type=int, help="attack iterations")
    p.add_argument("--step-size", dest="step_size", type=float, help="attack step size")
    p.add_argument("--lambda-d", dest="lambda_d", type=float, help="distance weight")
    p.add_argument("--norm", choices=["l1", "l2"], help="distance norm")
    p.add_argument("--tau", type=int, help="filter depth in respaced steps")
    p.add_argument("--respaced-steps", dest="respaced_steps", type=int, help="respaced chain length")
    p.add_argument("--anchor", choices=["iterate", "filtered"], help="distance anchor")
    p.add_argument("--mask-threshold", dest="mask_threshold", type=float, help="mask threshold")
    p.add_argument("--mask-dilation", dest="mask_dilation", type=int, help="mask dilation size")
    p.add_argument("--refine-tau", dest="refine_tau", type=int, help="refinement tau override")
    p.add_argument("--refine-steps", dest="refine_steps", type=int, help="refinement respacing")
    p.add_argument("--no-mask", action="store_true", help="disable mask localization")


def _add_instance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--image", help="input PNG (alternative to --dataset)")
    p.add_argument("--dataset", default="builtin:curves32", help="dataset ref or archive path")
    p.add_argument("--split", default="eval", help="dataset split")
    p.add_argument("--index", type=int, default=0, help="instance index within the split")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diffcf", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-ddpm", help="train the denoiser on a dataset")
    _add_config_flags(p)
    p.add_argument("--dataset", default="builtin:curves32")
    p.add_argument("--split", default="train")
    p.add_argument("--iterations", type=int, help="training iterations")
    p.add_argument("--max-train-timestep", dest="max_train_timestep", type=int,
                   help="restrict sampled noise levels to a chain prefix")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(handler=cmd_train_ddpm)

    p = sub.add_parser("train-classifier", help="train the frozen classifier")
    _add_config_flags(p)
    p.add_argument("--dataset", default="builtin:curves32")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_train_classifier)

    p = sub.add_parser("explain", help="produce one counterfactual run directory")
    _add_config_flags(p)
    _add_knob_flags(p)
    _add_instance_flags(p)
    p.add_argument("--classifier", required=True)
    p.add_argument("--denoiser", required=True)
    p.add_argument("--target", type=int, required=True, help="target class index")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--canonical", action="store_true",
                   help="omit volatile fields (timings) from the manifest")
    p.set_defaults(handler=cmd_explain)

    p = sub.add_parser("diversity", help="k stochastic counterfactual variants")
    _add_config_flags(p)
    _add_knob_flags(p)
    _add_instance_flags(p)
    p.add_argument("--classifier", required=True)
    p.add_argument("--denoiser", required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--out", required=True)
    p.add_argument("--canonical", action="store_true")
    p.set_defaults(handler=cmd_diversity)

    p = sub.add_parser("evaluate", help="metric report over a directory of runs")
    p.add_argument("--runs", required=True, help="directory containing run directories")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--classifier", help="classifier checkpoint (fid/fs/cout/diversity)")
    p.add_argument("--s3-encoder", dest="s3_encoder", help="twin-view encoder checkpoint")
    p.add_argument("--train-missing-encoders", action="store_true",
                   help="fit and save missing encoders from the run inputs")
    p.add_argument("--metrics", default="all", help="comma list or 'all'")
    p.add_argument("--cout-steps", dest="cout_steps", type=int, default=20)
    p.add_argument("--sfid-splits", dest="sfid_splits", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("ingest", help="validate and pack an image directory")
    p.add_argument("--dir", required=True, help="directory of PNG images")
    p.add_argument("--manifest", required=True, help="CSV of filename,label")
    p.add_argument("--out", required=True, help="dataset archive path")
    p.add_argument("--lenient", action="store_true", help="drop bad files instead of failing")
    p.add_argument("--seed", type=int, default=0, help="split seed")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("serve", help="run the workbench HTTP service")
    env = os.environ
    p.add_argument("--host", default=env.get("DIFFCF_HOST", "127.0.0.1"))
    p.add_argument("--port", type=int, default=int(env.get("DIFFCF_PORT", "8321")))
    p.add_argument(
        "--data-root", dest="data_root", default=env.get("DIFFCF_DATA_ROOT", "./diffcf-data")
    )
    p.add_argument(
        "--slots", type=int, default=int(env.get("DIFFCF_SLOTS", "1")),
        help="concurrent heavy jobs",
    )
    p.add_argument(
        "--strict-ingestion", dest="strict_ingestion", action="store_true",
        default=env.get("DIFFCF_STRICT_INGESTION", "") == "1",
    )
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigurationError as exc:
        _fail("config", str(exc))
        return EXIT_CONFIG
    except AssetNotFoundError as exc:
        _fail("asset-not-found", str(exc))
        return EXIT_NOT_FOUND
    except FileNotFoundError as exc:
        _fail("asset-not-found", str(exc))
        return EXIT_NOT_FOUND
    except DiffcfError as exc:
        _fail("runtime", str(exc))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
