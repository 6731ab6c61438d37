"""Command-line interface.

Exit codes are a stable contract:
  0  success
  1  scene validation failure / infeasible budget / ungrounded answer
  2  I/O, network or auth failure
  3  response parse failure
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import llm as llm_mod
from .evalharness import (
    EvalConfig,
    Layout,
    SceneRecipe,
    generate_queries,
    generate_scene,
    run_eval,
)
from .oracle import OracleConfig, derive_edges, interpret_query
from .parsing import UnparseableResponse, parse_response, validate_grounding
from .prompts import (
    DEFAULT_TOKEN_BUDGET,
    BudgetInfeasible,
    build_prompt,
    estimate_tokens,
    select_examples,
)
from .scene_model import SceneError, SceneGraph, parse_scene, scene_issues, serialize_scene

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2
EXIT_PARSE = 3

DEFAULT_CONFIG_PATH = "scenequery.json"


@dataclass
class CliConfig:
    oracle: OracleConfig = field(default_factory=OracleConfig)
    llm: llm_mod.LlmConfig = field(default_factory=llm_mod.LlmConfig)
    budget: int = DEFAULT_TOKEN_BUDGET
    strict_parse: bool = False
    output_format: str = "text"


def load_config(path: Optional[str], args: argparse.Namespace) -> CliConfig:
    """Merge config file, environment and flags (flag > env > file > default)."""
    cfg = CliConfig()
    config_path = path or (DEFAULT_CONFIG_PATH if os.path.exists(DEFAULT_CONFIG_PATH) else None)
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if "oracle" in raw:
            cfg.oracle = OracleConfig(**raw["oracle"])
        if "llm" in raw:
            cfg.llm = llm_mod.LlmConfig(**raw["llm"])
        cfg.budget = raw.get("budget", cfg.budget)
        cfg.strict_parse = raw.get("strict_parse", cfg.strict_parse)

    if getattr(args, "budget", None):
        cfg.budget = args.budget
    if getattr(args, "strict", False):
        cfg.strict_parse = True
    if getattr(args, "format", None):
        cfg.output_format = args.format
    if cfg.budget <= 0:
        raise ValueError("token budget must be positive")
    return cfg


def _read_scene(path: str) -> SceneGraph:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    try:
        return parse_scene(text)
    except SceneError as exc:
        print(f"error: invalid scene: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _emit(payload: dict, text: str, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


def cmd_validate(args: argparse.Namespace, cfg: CliConfig) -> int:
    try:
        text = Path(args.scene).read_text(encoding="utf-8")
    except OSError as exc:
        if cfg.output_format == "json":
            print(json.dumps({"error": str(exc)}))
        else:
            print(f"error: cannot read {args.scene}: {exc}", file=sys.stderr)
        return EXIT_IO
    count, issues = scene_issues(text)
    payload = {"nodes": count, "issues": [str(i) for i in issues]}
    lines = [f"{count} nodes, {len(issues)} issues"] + [f"  {i}" for i in issues]
    _emit(payload, "\n".join(lines), cfg.output_format)
    return EXIT_OK if not issues else EXIT_INVALID


def cmd_describe(args: argparse.Namespace, cfg: CliConfig) -> int:
    scene = _read_scene(args.scene)
    node_rows = [
        {
            "id": n.id,
            "object_tag": n.object_tag,
            "bbox_center": list(n.bbox_center),
            "bbox_extent": list(n.bbox_extent),
        }
        for n in scene.nodes
    ]
    lines = [
        f"{n.id:>4}  {n.object_tag:<20} center {list(n.bbox_center)}  extent {list(n.bbox_extent)}"
        for n in scene.nodes
    ]
    payload: dict = {"nodes": node_rows}
    if args.relations:
        edges = derive_edges(scene, cfg.oracle)
        payload["edges"] = [[s, rel.value, o] for s, rel, o in edges]
        lines.append("")
        lines.append("relations:")
        lines.extend(f"  {s} {rel.value} {o}" for s, rel, o in edges)
        if not edges:
            lines.append("  (none)")
    _emit(payload, "\n".join(lines), cfg.output_format)
    return EXIT_OK


def _make_backend(kind: str, scene: SceneGraph, cfg: CliConfig, mock_script_path: Optional[str]):
    if kind == "oracle":
        return llm_mod.OracleMockBackend(scene, cfg.oracle)
    if kind == "mock":
        if not mock_script_path:
            print("error: --backend mock requires --mock-script", file=sys.stderr)
            raise SystemExit(EXIT_IO)
        with open(mock_script_path, encoding="utf-8") as fh:
            script = json.load(fh)
        return llm_mod.MockBackend(script)
    return llm_mod.HttpBackend(cfg.llm)


def _run_ask(scene: SceneGraph, query: str, backend, cfg: CliConfig) -> int:
    structured = interpret_query(scene, query)
    bundle = build_prompt(scene, query, select_examples(structured.category), budget=cfg.budget)
    try:
        raw = llm_mod.complete(bundle, cfg.llm, backend=backend, user_text=query)
    except llm_mod.LlmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        parsed = parse_response(raw, strict=cfg.strict_parse)
    except UnparseableResponse as exc:
        print(f"error: unparseable response: {exc}", file=sys.stderr)
        print(exc.raw, file=sys.stderr)
        return EXIT_PARSE
    issues = validate_grounding(parsed, scene)

    if cfg.output_format == "json":
        print(
            json.dumps(
                {
                    "inferred_query": parsed.inferred_query,
                    "relevant_objects": list(parsed.relevant_object_ids),
                    "relevance_reason": parsed.relevance_reason,
                    "final_text": parsed.final_text,
                    "final_object_tag": parsed.final_object_tag,
                    "final_object_id": parsed.final_object_id,
                    "explanation": parsed.explanation,
                    "grounding_issues": [f"{i.kind.value}: {i.detail}" for i in issues],
                },
                indent=2,
                sort_keys=True,
            )
        )
    else:
        print(f"inferred query : {parsed.inferred_query}")
        print(f"relevant ids   : {list(parsed.relevant_object_ids)}")
        print(f"answer         : {parsed.final_text}")
        print(f"explanation    : {parsed.explanation}")
        if issues:
            print("grounding issues:")
            for issue in issues:
                print(f"  {issue.kind.value}: {issue.detail}")
    return EXIT_OK if not issues else EXIT_INVALID


def cmd_ask(args: argparse.Namespace, cfg: CliConfig) -> int:
    scene = _read_scene(args.scene)
    backend = _make_backend(args.backend, scene, cfg, args.mock_script)
    try:
        return _run_ask(scene, args.query, backend, cfg)
    except BudgetInfeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def cmd_repl(args: argparse.Namespace, cfg: CliConfig) -> int:
    scene = _read_scene(args.scene)
    backend_kind = args.backend
    print(f"{len(scene.nodes)} nodes loaded; :quit exits, :oracle on|off switches backend")
    for line in sys.stdin:
        query = line.strip()
        if not query:
            continue
        if query == ":quit":
            break
        if query.startswith(":oracle"):
            backend_kind = "oracle" if query.endswith("on") else args.backend
            print(f"backend: {backend_kind}")
            continue
        backend = _make_backend(backend_kind, scene, cfg, args.mock_script)
        try:
            _run_ask(scene, query, backend, cfg)
        except (BudgetInfeasible, llm_mod.LlmError) as exc:
            print(f"error: {exc}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, cfg: CliConfig) -> int:
    tasks = []
    for seed in range(args.seed, args.seed + args.scenes):
        gen = generate_scene(SceneRecipe(seed=seed, node_count=args.nodes, layout=Layout(args.layout)))
        tasks.append((gen, generate_queries(gen, cfg.oracle)))

    backend = "oracle" if args.backend == "oracle" else _make_backend(args.backend, tasks[0][0].scene, cfg, args.mock_script)
    report = run_eval(
        tasks,
        backend=backend,
        cfg=EvalConfig(budget=cfg.budget, oracle=cfg.oracle, llm=cfg.llm, strict_parse=cfg.strict_parse),
    )

    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out_dir / "report.txt").write_text(report.to_text() + "\n", encoding="utf-8")
        (out_dir / "records.jsonl").write_text(report.to_jsonl(), encoding="utf-8")
    if cfg.output_format == "json":
        print(report.to_json())
    else:
        print(report.to_text())
    return EXIT_OK


def cmd_compact(args: argparse.Namespace, cfg: CliConfig) -> int:
    scene = _read_scene(args.scene)
    query = args.query or ""
    examples = select_examples(interpret_query(scene, query).category)
    before = estimate_tokens(serialize_scene(scene))
    try:
        bundle = build_prompt(scene, query, examples, budget=cfg.budget)
    except BudgetInfeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    payload = {
        "scene_estimate_before": before,
        "prompt_estimate_after": bundle.token_estimate,
        "budget": cfg.budget,
        "included_nodes": len(bundle.included_node_ids),
        "actions": list(bundle.compaction_report),
    }
    lines = [
        f"scene estimate before : {before} tokens",
        f"prompt estimate after : {bundle.token_estimate} tokens (budget {cfg.budget})",
        f"included nodes        : {len(bundle.included_node_ids)} of {len(scene.nodes)}",
        "actions:",
    ]
    lines.extend(f"  {a}" for a in bundle.compaction_report)
    if not bundle.compaction_report:
        lines.append("  (none)")
    _emit(payload, "\n".join(lines), cfg.output_format)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scenequery", description="3D scene-graph question answering")
    parser.add_argument("--config", help=f"JSON config file (default: ./{DEFAULT_CONFIG_PATH} if present)")
    parser.add_argument("--format", choices=["text", "json"], help="output format")
    parser.add_argument("--budget", type=int, help="prompt token budget")
    parser.add_argument("--strict", action="store_true", help="strict response parsing")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a scene file")
    p.add_argument("scene")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("describe", help="print nodes and derived relations")
    p.add_argument("scene")
    p.add_argument("--relations", action="store_true")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("ask", help="answer one query about a scene")
    p.add_argument("scene")
    p.add_argument("query")
    p.add_argument("--backend", choices=["live", "mock", "oracle"], default="oracle")
    p.add_argument("--mock-script", help="JSON file: list of responses or substring->response map")
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("repl", help="interactive query loop")
    p.add_argument("scene")
    p.add_argument("--backend", choices=["live", "mock", "oracle"], default="oracle")
    p.add_argument("--mock-script")
    p.set_defaults(func=cmd_repl)

    p = sub.add_parser("eval", help="run the synthetic benchmark")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenes", type=int, default=5)
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--layout", choices=[l.value for l in Layout], default="Mixed")
    p.add_argument("--backend", choices=["live", "mock", "oracle"], default="oracle")
    p.add_argument("--mock-script")
    p.add_argument("--out", help="directory for report files")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compact", help="inspect scene compaction for a budget")
    p.add_argument("scene")
    p.add_argument("--query", default="")
    p.set_defaults(func=cmd_compact)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args)
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: bad configuration: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return args.func(args, cfg)
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
