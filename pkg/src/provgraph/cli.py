"""Command-line driver.

Verbs::

    provgraph generate --out cases/ --count 20 --seed 0 [--pad-to 25]
    provgraph matrix   CASE --out matrix.json
    provgraph graph    matrix.json --query ID --out outdir/
    provgraph score    component.json --truth CASE --out report.json
    provgraph run      CASE --out outdir/
    provgraph bench    cases/ --out benchdir/

A CASE is either a directory holding ``manifest.json`` (as written by
``generate``), a manifest file, or a plain directory of PNG/JPEG images (then
``--query`` is required and there is no ground truth).

Failures print one JSON error record on stderr and exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .config import ExperimentMode, MetricKind, RunConfig, load_config
from .dissimilarity import DissimilarityMatrix, analyze_all, assemble_matrix, compute_features
from .errors import ConfigError, IoError, ProvGraphError
from .graph import (
    ProvenanceGraph,
    QueryCase,
    extract_query_component,
    graph_to_dot,
    graph_to_json,
    kruskal_forest,
)
from .metrics import EvalReport, aggregate, format_table, score, table_to_json
from .records import ImageRecord, load_image
from .synthgen import CaseBlueprint, SourcePool, generate_case, protocol_blueprints, write_case

log = logging.getLogger("provgraph")

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
EXIT_ERROR = 2


# --- case loading -------------------------------------------------------------------

def _read_json(path: Path):
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read {path}: {exc}", path=path) from exc


def _manifest_path(case_path: Path) -> Optional[Path]:
    if case_path.is_file() and case_path.suffix == ".json":
        return case_path
    candidate = case_path / "manifest.json"
    return candidate if candidate.is_file() else None


def load_case(case_path, mode: ExperimentMode = ExperimentMode.WITHOUT_DISTRACTORS,
              query_id: Optional[str] = None) -> Tuple[List[ImageRecord], QueryCase]:
    """Images plus query (and ground truth when a manifest is present).

    Without distractors, manifest-listed distractor images are left out.
    """
    case_path = Path(case_path)
    if not case_path.exists():
        raise IoError(f"case path {case_path} does not exist", path=case_path)
    manifest_path = _manifest_path(case_path)
    if manifest_path is None:
        files = sorted(p for p in case_path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise IoError(f"no images in {case_path}", path=case_path)
        if query_id is None:
            raise ConfigError("a raw image directory needs --query")
        images = [load_image(p, id=p.stem) for p in files]
        return images, QueryCase(query_id, [im.id for im in images])

    data = _read_json(manifest_path)
    blueprint = CaseBlueprint.from_manifest(data)
    files = data.get("images") or {}
    ids = [n.id for n in blueprint.nodes]
    if mode is ExperimentMode.WITH_DISTRACTORS:
        ids += [d["id"] for d in blueprint.distractors]
    images = []
    for id_ in ids:
        if id_ not in files:
            raise IoError(f"manifest {manifest_path} lists no image file for {id_!r}", path=manifest_path)
        images.append(load_image(manifest_path.parent / files[id_], id=id_))
    case = QueryCase(query_id or blueprint.query_id, ids, blueprint.graph_topology)
    return images, case


# --- pipeline stages ----------------------------------------------------------------

def _dump(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def compute_matrix(images: Sequence[ImageRecord], cfg: RunConfig, pair_log: Optional[Path] = None):
    analyses = analyze_all(images, cfg.pipeline, cfg.metric.is_pixel_metric, cfg.threads)
    if pair_log is not None:
        lines = [json.dumps(analyses[k].record(cfg.metric), sort_keys=True) for k in sorted(analyses)]
        _dump(pair_log, "\n".join(lines) + "\n")
    return assemble_matrix([im.id for im in images], analyses, cfg.metric, cfg.fingerprint())


def build_graphs(matrix: DissimilarityMatrix, query_id: str, out_dir: Path) -> ProvenanceGraph:
    """Write forest and query-component artifacts; return the component."""
    forest = kruskal_forest(matrix)
    component = extract_query_component(forest, query_id)
    meta = dict(query_id=query_id, metric=matrix.kind.value, fingerprint=matrix.config_fingerprint)
    _dump(out_dir / "forest.json", graph_to_json(forest, **meta))
    _dump(out_dir / "component.json", graph_to_json(component, **meta))
    _dump(out_dir / "component.dot", graph_to_dot(component, query_id))
    return component


def write_report(report: EvalReport, fingerprint: str, out_path: Path) -> None:
    payload = dict(report.to_dict(), config_fingerprint=fingerprint)
    _dump(out_path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    table = aggregate([report])
    _dump(out_path.with_suffix(".txt"), format_table(table))


def run_case(case_path, cfg: RunConfig, out_dir=None, query_id: Optional[str] = None) -> dict:
    """End-to-end: matrix, forest, query component and (with ground truth) a report."""
    out_dir = Path(out_dir or cfg.output_dir)
    images, case = load_case(case_path, cfg.experiment_mode, query_id)
    matrix = compute_matrix(images, cfg, pair_log=out_dir / "pairs.jsonl")
    _dump(out_dir / "matrix.json", matrix.to_json())
    component = build_graphs(matrix, case.query_id, out_dir)
    summary = {"query_id": case.query_id, "images": len(images), "component_nodes": len(component.nodes),
               "config_fingerprint": cfg.fingerprint()}
    if case.ground_truth is not None:
        report = score(component, case.ground_truth)
        write_report(report, cfg.fingerprint(), out_dir / "report.json")
        summary["report"] = report.to_dict()
    return summary


def _case_dirs(root: Path) -> List[Path]:
    return sorted(p.parent for p in root.glob("*/manifest.json"))


def run_benchmark(case_dir, cfg: RunConfig, out_dir=None) -> dict:
    """Score every case under ``case_dir`` and time both pipeline variants.

    Timings go to ``timing.json`` so the score table stays reproducible byte
    for byte.
    """
    case_dir = Path(case_dir)
    out_dir = Path(out_dir or cfg.output_dir)
    cases = _case_dirs(case_dir)
    if not cases:
        raise IoError(f"no case manifests under {case_dir}", path=case_dir)
    reports, failures, per_case = [], [], []
    kp_time = ext_time = 0.0
    n_pairs = 0
    for path in cases:
        try:
            images, case = load_case(path, cfg.experiment_mode)
            features = compute_features(images, cfg.pipeline, cfg.threads)
            t0 = time.perf_counter()
            analyze_all(images, cfg.pipeline, False, cfg.threads, features)
            t1 = time.perf_counter()
            analyses = analyze_all(images, cfg.pipeline, True, cfg.threads, features)
            t2 = time.perf_counter()
            matrix = assemble_matrix([im.id for im in images], analyses, cfg.metric, cfg.fingerprint())
            component = extract_query_component(kruskal_forest(matrix), case.query_id)
            report = score(component, case.ground_truth)
        except ProvGraphError as exc:
            failures.append({"case": path.name, **_error_record(exc)})
            log.warning("case %s failed: %s", path.name, exc)
            continue
        reports.append(report)
        per_case.append({"case": path.name, **report.to_dict()})
        kp_time += t1 - t0
        ext_time += t2 - t1
        n_pairs += len(analyses)

    table = aggregate(reports) if reports else {}
    result = {"metric": cfg.metric.value, "experiment_mode": cfg.experiment_mode.value,
              "config_fingerprint": cfg.fingerprint(), "cases": per_case, "failures": failures,
              "table": table}
    _dump(out_dir / "report.json", json.dumps(result, indent=2, sort_keys=True) + "\n")
    if table:
        _dump(out_dir / "table.txt", format_table(table, f"{cfg.metric.value} / {cfg.experiment_mode.value}"))
    timing = {
        "pairs": n_pairs,
        "keypoint_only_mean_s": kp_time / n_pairs if n_pairs else None,
        "extended_mean_s": ext_time / n_pairs if n_pairs else None,
    }
    _dump(out_dir / "timing.json", json.dumps(timing, indent=2, sort_keys=True) + "\n")
    result["timing"] = timing
    return result


def generate_cases(out_dir, count: int, seed: int, min_nodes: int, max_nodes: int, pad_to: int,
                   pool_dir=None) -> List[Path]:
    pool = SourcePool.from_directory(pool_dir) if pool_dir else SourcePool.procedural()
    paths = []
    for i, bp in enumerate(protocol_blueprints(seed, count, min_nodes, max_nodes, pad_to)):
        images, case = generate_case(bp, pool)
        paths.append(write_case(Path(out_dir) / f"case_{i:03d}", images, case, bp))
    return paths


# --- argument handling --------------------------------------------------------------

def _error_record(exc: BaseException) -> dict:
    rec = {"error": getattr(exc, "code", type(exc).__name__), "message": str(exc)}
    if getattr(exc, "path", None):
        rec["file"] = exc.path
    return rec


def _parse_sets(pairs: Sequence[str]) -> Dict[str, str]:
    out = {}
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep or "." not in key:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _config(args) -> RunConfig:
    overrides = _parse_sets(args.set)
    for flag, key in (("metric", "run.metric"), ("mode", "run.experiment_mode"), ("threads", "run.threads")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = str(value)
    return load_config(args.config, overrides)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")
    p.add_argument("--metric", choices=[k.value for k in MetricKind])
    p.add_argument("--mode", choices=[m.value for m in ExperimentMode])
    p.add_argument("--threads", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="provgraph", description="Undirected image provenance graphs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("generate", help="write synthetic cases with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-nodes", type=int, default=4)
    p.add_argument("--max-nodes", type=int, default=10)
    p.add_argument("--pad-to", type=int, default=0, help="add distractors up to this many images")
    p.add_argument("--pool", help="directory of source images (default: procedural textures)")

    p = sub.add_parser("matrix", help="dissimilarity matrix of a case")
    p.add_argument("case")
    p.add_argument("--out", required=True)
    p.add_argument("--query")
    _add_config_flags(p)

    p = sub.add_parser("graph", help="forest and query component from a matrix")
    p.add_argument("matrix")
    p.add_argument("--query", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("score", help="score a graph against a case's ground truth")
    p.add_argument("graph")
    p.add_argument("--truth", required=True, help="case directory or manifest")
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="end-to-end on one case")
    p.add_argument("case")
    p.add_argument("--out")
    p.add_argument("--query")
    _add_config_flags(p)

    p = sub.add_parser("bench", help="score and time every case in a directory")
    p.add_argument("cases")
    p.add_argument("--out")
    _add_config_flags(p)
    return parser


def _dispatch(args) -> dict:
    if args.verb == "generate":
        paths = generate_cases(args.out, args.count, args.seed, args.min_nodes, args.max_nodes,
                               args.pad_to, args.pool)
        return {"cases": [str(p.parent) for p in paths]}
    if args.verb == "matrix":
        cfg = _config(args)
        images, _ = load_case(args.case, cfg.experiment_mode, args.query)
        matrix = compute_matrix(images, cfg)
        return {"matrix": str(_dump(Path(args.out), matrix.to_json()))}
    if args.verb == "graph":
        matrix = DissimilarityMatrix.from_json(_read_json_text(Path(args.matrix)))
        component = build_graphs(matrix, args.query, Path(args.out))
        return {"component_nodes": len(component.nodes)}
    if args.verb == "score":
        data = _read_json(Path(args.graph))
        predicted = ProvenanceGraph.from_dict(data)
        _, case = load_case(args.truth, ExperimentMode.WITH_DISTRACTORS)
        report = score(predicted, case.ground_truth)
        write_report(report, data.get("config_fingerprint") or "", Path(args.out))
        return report.to_dict()
    if args.verb == "run":
        cfg = _config(args)
        return run_case(args.case, cfg, args.out, args.query)
    cfg = _config(args)
    result = run_benchmark(args.cases, cfg, args.out)
    return {"cases": len(result["cases"]), "failures": len(result["failures"]), "timing": result["timing"]}


def _read_json_text(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}", path=path) from exc


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = _dispatch(args)
    except (ProvGraphError, ValueError, KeyError) as exc:
        print(json.dumps(_error_record(exc), sort_keys=True), file=sys.stderr)
        return EXIT_ERROR
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
