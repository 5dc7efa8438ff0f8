"""
Command-line entry point.

    tubeseg segment --input ct.nii.gz --config run.cfg --output mask.nii.gz
    tubeseg eval --pred preds/ --gt labels/ --report report.csv
    tubeseg phantom --out-prefix case01 --seed 1
    tubeseg weights init --out model.unw
    tubeseg weights inspect model.unw

Standard output carries one JSON summary line per command; logs and error
messages go to standard error. Exit codes: 0 ok, 2 empty coarse prediction,
64 usage or configuration, 65 data format, 70 internal.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .backends import AnalyticBackend, Backend, UNetBackend, load_backends
from .config import PipelineConfig, default_threads, load_config, with_threads
from .errors import EXIT_INTERNAL, EXIT_OK, IoFailure, TubesegError, UsageError
from .fixpoint import FixpointConfig
from .metrics import CaseResult, EvalReport, evaluate_case
from .models import Mask3
from .nifti import read_mask, read_volume, write_nifti
from .phantom import BlobSpec, PhantomSpec, generate_phantom
from .pipeline import run_segmentation
from .unet import init_weights_random, load_weights, save_weights

logger = logging.getLogger("tubeseg")

NIFTI_SUFFIXES = (".nii.gz", ".nii")


class ArgumentParser(argparse.ArgumentParser):
    """Parser that raises UsageError instead of exiting."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=False))


def _triple(kind):
    def parse(text: str):
        parts = [p for p in text.split(",") if p.strip()]
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"expected three comma-separated values, got {text!r}")
        try:
            return tuple(kind(p) for p in parts)
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad value {text!r}") from None

    return parse


def _blob(text: str) -> BlobSpec:
    parts = text.split(",")
    if len(parts) not in (4, 5):
        raise argparse.ArgumentTypeError(f"blob must be x,y,z,r[,hu], got {text!r}")
    try:
        center = tuple(int(p) for p in parts[:3])
        radius = float(parts[3])
        hu = float(parts[4]) if len(parts) == 5 else 150.0
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad blob {text!r}") from None
    return BlobSpec(center, radius, hu)  # type: ignore[arg-type]


def _case_id(path: Path) -> Optional[str]:
    for suffix in NIFTI_SUFFIXES:
        if path.name.endswith(suffix):
            return path.name[: -len(suffix)]
    return None


def _nifti_files(directory: Path) -> Dict[str, Path]:
    if not directory.is_dir():
        raise UsageError(f"{directory} is not a directory")
    files = {}
    for path in sorted(directory.iterdir()):
        case_id = _case_id(path)
        if case_id is not None and case_id not in files:
            files[case_id] = path
    return files


def _backends(args, cfg: PipelineConfig):
    if args.backend == "analytic":
        backend = AnalyticBackend(*cfg.analytic_weights)
        return backend, [backend]

    if not cfg.model_paths:
        raise UsageError("the unet backend needs at least one 'model' path in the config")
    paths = list(cfg.model_paths)
    coarse_path = cfg.coarse_model_path
    for path in [coarse_path] + paths:
        if not Path(path).is_file():  # type: ignore[arg-type]
            raise UsageError(f"model file {path} does not exist")
    fine: List[Backend] = load_backends(paths)
    coarse = fine[0] if coarse_path == paths[0] else UNetBackend.from_file(coarse_path)  # type: ignore[arg-type]
    return coarse, fine


def cmd_segment(args) -> int:
    cfg = load_config(args.config) if args.config else PipelineConfig.from_env()
    threads = args.threads if args.threads is not None else default_threads(cfg.seg.threads)
    cfg = with_threads(cfg, threads)
    coarse, fine = _backends(args, cfg)
    fixpoint_cfg = FixpointConfig(iterations=0) if args.no_fixpoint else cfg.fixpoint

    vol = read_volume(args.input)
    logger.info("segmenting %s %s with %d model(s)", args.input, vol.shape, len(fine))
    result = run_segmentation(vol, coarse, fine, cfg.seg, fixpoint_cfg)
    write_nifti(result.mask, args.output)
    _emit({"status": "ok", "roi": result.roi.to_list(), "foreground": result.mask.foreground_count})
    return EXIT_OK


def cmd_eval(args) -> int:
    preds = _nifti_files(Path(args.pred))
    gts = _nifti_files(Path(args.gt))
    threads = args.threads if args.threads is not None else default_threads()

    def score(case_id: str) -> CaseResult:
        if case_id not in preds:
            return CaseResult(case_id, error="missing prediction")
        try:
            pred: Mask3 = read_mask(preds[case_id])
            gt: Mask3 = read_mask(gts[case_id])
        except TubesegError as exc:
            logger.warning("case %s unreadable: %s", case_id, exc)
            return CaseResult(case_id, error=f"{type(exc).__name__}: {exc}")
        return evaluate_case(pred, gt, case_id)

    ids = sorted(gts)
    if threads > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cases = list(pool.map(score, ids))
    else:
        cases = [score(case_id) for case_id in ids]

    report = EvalReport(cases)
    report_path = Path(args.report)
    json_path = report_path.with_suffix(".json")
    if json_path == report_path:
        json_path = report_path.with_name(report_path.stem + ".report.json")
    try:
        report.to_csv(report_path)
        report.to_json(json_path)
    except OSError as exc:
        raise IoFailure(f"cannot write report {report_path}: {exc}") from exc

    summary = report.to_dict()
    _emit(
        {
            "status": "ok",
            "cases": len(cases),
            "errors": sum(1 for c in cases if not c.ok),
            "mean_dice": summary["mean_dice"],
            "mean_hd_mm": summary["mean_hd_mm"],
        }
    )
    return EXIT_OK


def cmd_phantom(args) -> int:
    spec = PhantomSpec(
        shape=args.shape,
        spacing=args.spacing,
        seed=args.seed,
        trunk_radius_voxels=args.trunk_radius,
        branch_count=args.branches,
        noise_std=args.noise_std,
        false_positive_blob=args.blob,
    )
    vol, mask = generate_phantom(spec)
    ct_path = f"{args.out_prefix}_ct.nii.gz"
    label_path = f"{args.out_prefix}_label.nii.gz"
    write_nifti(vol, ct_path)
    write_nifti(mask, label_path)
    _emit({"status": "ok", "ct": ct_path, "label": label_path, "foreground": mask.foreground_count})
    return EXIT_OK


def cmd_weights(args) -> int:
    if args.action == "init":
        try:
            weights = init_weights_random(args.levels, args.base_width, args.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        save_weights(weights, args.out)
        manifest = weights.manifest()
        _emit({"status": "ok", "path": args.out, "parameters": manifest["parameters"]})
    else:
        _emit(load_weights(args.path).manifest())
    return EXIT_OK


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="tubeseg", description="Coarse-to-fine 3D tubular segmentation")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", parser_class=ArgumentParser)
    sub.required = True

    seg = sub.add_parser("segment", help="segment a CT volume")
    seg.add_argument("--input", required=True, help="CT volume (.nii or .nii.gz)")
    seg.add_argument("--config", help="pipeline config file (default: $TUBESEG_CONFIG)")
    seg.add_argument("--output", required=True, help="output mask path")
    seg.add_argument("--backend", choices=("unet", "analytic"), default="unet")
    seg.add_argument("--threads", type=int, help="worker threads, 0 = one per CPU")
    seg.add_argument("--no-fixpoint", action="store_true", help="skip fixpoint refinement")
    seg.set_defaults(func=cmd_segment)

    ev = sub.add_parser("eval", help="score predictions against ground truth")
    ev.add_argument("--pred", required=True, help="directory of predicted masks")
    ev.add_argument("--gt", required=True, help="directory of ground-truth masks")
    ev.add_argument("--report", required=True, help="CSV report path; JSON is written beside it")
    ev.add_argument("--threads", type=int, help="worker threads")
    ev.set_defaults(func=cmd_eval)

    ph = sub.add_parser("phantom", help="write a synthetic vessel phantom")
    ph.add_argument("--shape", type=_triple(int), default=(64, 64, 64))
    ph.add_argument("--spacing", type=_triple(float), default=(1.0, 1.0, 1.0))
    ph.add_argument("--seed", type=int, default=0)
    ph.add_argument("--trunk-radius", type=float, default=4.0)
    ph.add_argument("--branches", type=int, default=2)
    ph.add_argument("--noise-std", type=float, default=20.0)
    ph.add_argument("--blob", type=_blob, help="false-positive sphere x,y,z,r[,hu]")
    ph.add_argument("--out-prefix", required=True)
    ph.set_defaults(func=cmd_phantom)

    wt = sub.add_parser("weights", help="create or inspect U-Net weight files")
    wsub = wt.add_subparsers(dest="action", parser_class=ArgumentParser)
    wsub.required = True
    init = wsub.add_parser("init", help="write He-initialized weights")
    init.add_argument("--out", required=True)
    init.add_argument("--levels", type=int, default=5)
    init.add_argument("--base-width", type=int, default=8)
    init.add_argument("--seed", type=int, default=0)
    inspect = wsub.add_parser("inspect", help="print the tensor manifest")
    inspect.add_argument("path")
    wt.set_defaults(func=cmd_weights)
    return parser


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        _configure_logging(args.verbose)
        return args.func(args)
    except SystemExit as exc:
        # --help
        return int(exc.code or 0)
    except TubesegError as exc:
        print(f"tubeseg: {type(exc).__name__}: {exc}", file=sys.stderr)
        _emit({"status": "error", "error": type(exc).__name__, "exit_code": exc.exit_code})
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        logger.exception("internal error")
        print(f"tubeseg: internal error: {exc}", file=sys.stderr)
        _emit({"status": "error", "error": type(exc).__name__, "exit_code": EXIT_INTERNAL})
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
