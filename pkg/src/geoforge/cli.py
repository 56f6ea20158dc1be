"""geoforge command line.

Exit codes: 0 success, 2 validation errors, 3 backend errors.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import evaluation
from .answers import compute_visibility, parse_citations
from .config import AppConfig, build_gateway, load_config
from .corpus import SPLIT_POLICY, Document, curate_commercial_queries, load_dataset
from .errors import GeoforgeError, ValidationError
from .evaluation import KeywordSet, RewriteMethod, jaccard_overlap, run_evaluation
from .rewards import (
    AttackMode,
    ColdStartPair,
    GroupSample,
    cold_start_filter,
    grpo_loss,
    group_reward,
    inject_adversarial,
    kl_estimate,
    rewrite_document,
)
from .answers import VisibilityScore
from .rules import RuleSet, RuleStage, extract_rules


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except GeoforgeError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)

    return wrapper


def _load_rule_file(path: str) -> RuleSet:
    with open(path, encoding="utf-8") as handle:
        rules = json.load(handle)
    if not isinstance(rules, list) or not all(isinstance(r, str) for r in rules):
        raise ValidationError(f"{path}: expected a JSON array of rule strings")
    return RuleSet(rules=tuple(rules), stage=RuleStage.FILTERED, lineage={})


def _read_jsonl(path: str) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path} line {number}: invalid JSON: {exc.msg}") from exc
    return rows


def _row_field(row: dict, key: str, path: str, number: int):
    try:
        return row[key]
    except (KeyError, TypeError):
        raise ValidationError(f"{path} record {number}: missing field {key!r}") from None


def _document_from_file(path: str) -> Document:
    text = Path(path).read_text(encoding="utf-8")
    return Document(id=Path(path).stem, text=text)


def _save_transcript(gateway, config: AppConfig) -> None:
    if config.backend == "live" and config.transcript and gateway.transcript is not None:
        gateway.transcript.save(config.transcript)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="JSON config file.")
@click.pass_context
def main(ctx, config_path):
    """Generative-engine visibility scoring, rule mining, rewriting, and evaluation."""
    ctx.obj = config_path


def _config(ctx, override: str | None = None) -> AppConfig:
    return load_config(override or ctx.obj)


@main.group()
def dataset():
    """Dataset validation and curation."""


@dataset.command("validate")
@click.argument("path", type=click.Path(exists=True))
@handle_errors
def dataset_validate(path):
    ds = load_dataset(path)
    click.echo(f"ok: {len(ds)} records")


@dataset.command("curate")
@click.argument("src", type=click.Path(exists=True))
@click.option("--seed", type=int, required=True)
@click.option("--out-train", type=click.Path(), required=True)
@click.option("--out-test", type=click.Path(), required=True)
@handle_errors
def dataset_curate(src, seed, out_train, out_test):
    raw = Path(src).read_text(encoding="utf-8").splitlines()
    train, test = curate_commercial_queries(raw, seed=seed)
    Path(out_train).write_text("".join(q + "\n" for q in train), encoding="utf-8")
    Path(out_test).write_text("".join(q + "\n" for q in test), encoding="utf-8")
    meta = {"policy": SPLIT_POLICY, "seed": seed, "train": len(train), "test": len(test)}
    Path(out_train + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    click.echo(f"train={len(train)} test={len(test)}")


@main.command("score")
@click.option("--answer", "answer_path", type=click.Path(exists=True), required=True)
@click.option("--num-candidates", type=int, required=True)
@handle_errors
def score(answer_path, num_candidates):
    text = Path(answer_path).read_text(encoding="utf-8")
    answer = parse_citations(text, num_candidates)
    scores = compute_visibility(answer, num_candidates)
    rows = [
        {"candidate": i + 1, "word": s.word, "pos": s.pos, "overall": s.overall, "vis": s.vis}
        for i, s in enumerate(scores)
    ]
    click.echo(json.dumps(rows, ensure_ascii=False, indent=2))


@main.group()
def rules():
    """Preference-rule extraction and comparison."""


@rules.command("extract")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_context
@handle_errors
def rules_extract(ctx, dataset_path, config_path, out_path):
    config = _config(ctx, config_path)
    gateway = build_gateway(config)
    ds = load_dataset(dataset_path, num_candidates=config.num_candidates)
    run = extract_rules(
        ds, gateway, chunk_token_limit=config.chunk_token_limit, concurrency=config.concurrency
    )
    Path(out_path).write_text(run.rule_set.to_json(), encoding="utf-8")
    sidecar = {
        "stage": run.rule_set.stage.value,
        "lineage": {rule: list(ids) for rule, ids in run.rule_set.lineage.items()},
        "skipped_queries": run.skipped_query_ids,
        "errors": run.errors,
        "insights": run.insight_count,
    }
    Path(out_path + ".lineage.json").write_text(
        json.dumps(sidecar, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    _save_transcript(gateway, config)
    click.echo(f"{len(run.rule_set.rules)} rules ({len(run.skipped_query_ids)} queries skipped)")


@rules.command("diff")
@click.argument("left", type=click.Path(exists=True))
@click.argument("right", type=click.Path(exists=True))
@handle_errors
def rules_diff(left, right):
    a = set(_load_rule_file(left).rules)
    b = set(_load_rule_file(right).rules)
    for rule in sorted(a - b):
        click.echo(f"- {rule}")
    for rule in sorted(b - a):
        click.echo(f"+ {rule}")
    click.echo(f"common={len(a & b)} only-left={len(a - b)} only-right={len(b - a)}")


@main.command("rewrite")
@click.option("--doc", "doc_path", type=click.Path(exists=True), required=True)
@click.option("--rules", "rules_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_context
@handle_errors
def rewrite(ctx, doc_path, rules_path, out_path):
    config = _config(ctx)
    gateway = build_gateway(config)
    candidate = rewrite_document(gateway, _document_from_file(doc_path), _load_rule_file(rules_path))
    _save_transcript(gateway, config)
    if out_path:
        Path(out_path).write_text(candidate.rewritten.text + "\n", encoding="utf-8")
    else:
        click.echo(candidate.rewritten.text)


@main.command("reward")
@click.option("--group", "group_path", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.pass_context
@handle_errors
def reward(ctx, group_path, config_path):
    config = _config(ctx, config_path)
    rows = _read_jsonl(group_path)
    triples = [
        tuple(_row_field(r, key, group_path, i) for key in ("outcome", "rule", "semantic"))
        for i, r in enumerate(rows, 1)
    ]
    breakdowns = group_reward(triples)
    samples = [
        GroupSample(
            logprob_new=_row_field(r, "logprob_new", group_path, i),
            logprob_old=_row_field(r, "logprob_old", group_path, i),
            reward=b,
        )
        for i, (r, b) in enumerate(zip(rows, breakdowns), 1)
    ]
    kl = kl_estimate(samples)
    loss = grpo_loss(samples, config.grpo, kl)
    out = {
        "samples": [
            {
                "z_outcome": b.z_outcome,
                "z_rule": b.z_rule,
                "z_semantic": b.z_semantic,
                "total": b.total,
            }
            for b in breakdowns
        ],
        "kl_estimate": kl,
        "loss": loss,
    }
    click.echo(json.dumps(out, ensure_ascii=False, indent=2))


@main.command("attack")
@click.option("--mode", type=click.Choice([m.value for m in AttackMode]), required=True)
@click.option("--doc", "doc_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@handle_errors
def attack(mode, doc_path, out_path):
    candidate = inject_adversarial(_document_from_file(doc_path), AttackMode(mode))
    if out_path:
        Path(out_path).write_text(candidate.rewritten.text + "\n", encoding="utf-8")
    else:
        click.echo(candidate.rewritten.text)


@main.group()
def coldstart():
    """Cold-start dataset filtering."""


@coldstart.command("filter")
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@handle_errors
def coldstart_filter_cmd(pairs_path, out_path):
    def to_score(obj, path, number):
        if not isinstance(obj, dict) or set(obj) - {"word", "pos", "overall"}:
            raise ValidationError(f"{path} record {number}: scores need exactly word/pos/overall")
        return VisibilityScore(
            word=_row_field(obj, "word", path, number),
            pos=_row_field(obj, "pos", path, number),
            overall=_row_field(obj, "overall", path, number),
        )

    rows = _read_jsonl(pairs_path)
    pairs = [
        ColdStartPair(
            before=to_score(_row_field(row, "before", pairs_path, i), pairs_path, i),
            after=to_score(_row_field(row, "after", pairs_path, i), pairs_path, i),
            kpr=_row_field(row, "kpr", pairs_path, i),
            kpc=_row_field(row, "kpc", pairs_path, i),
            id=str(row.get("id", i)),
        )
        for i, row in enumerate(rows, 1)
    ]
    accepted = cold_start_filter(pairs)
    accepted_ids = {p.id for p in accepted}
    kept_rows = [row for i, row in enumerate(rows, 1) if str(row.get("id", i)) in accepted_ids]
    payload = "".join(json.dumps(row, ensure_ascii=False) + "\n" for row in kept_rows)
    if out_path:
        Path(out_path).write_text(payload, encoding="utf-8")
    else:
        click.echo(payload, nl=False)
    click.echo(f"accepted {len(accepted)} / {len(pairs)}", err=True)


@main.command("eval")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--methods", "methods_spec", default="vanilla", show_default=True,
              help="Comma list: vanilla, hijack, poison, rules:<rules.json>.")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_context
@handle_errors
def eval_cmd(ctx, dataset_path, config_path, methods_spec, out_path):
    config = _config(ctx, config_path)
    gateway = build_gateway(config)
    ds = load_dataset(dataset_path, num_candidates=config.num_candidates)

    methods: list[RewriteMethod] = []
    for item in [part.strip() for part in methods_spec.split(",") if part.strip()]:
        if item == evaluation.VANILLA:
            continue
        if item in (AttackMode.HIJACK.value, AttackMode.POISON.value):
            mode = AttackMode(item)
            methods.append(RewriteMethod(name=item, apply=lambda doc, m=mode: inject_adversarial(doc, m).rewritten))
        elif item.startswith("rules:"):
            rule_set = _load_rule_file(item.split(":", 1)[1])
            methods.append(
                RewriteMethod(name=item, apply=lambda doc, rs=rule_set: rewrite_document(gateway, doc, rs).rewritten)
            )
        else:
            raise ValidationError(f"unknown method {item!r}")

    report = run_evaluation(
        ds,
        methods,
        gateway,
        metadata={"models": config.models, "seed": config.seed, "transcript": config.transcript_id()},
        concurrency=config.concurrency,
    )
    _save_transcript(gateway, config)
    if out_path:
        Path(out_path).write_text(report.to_json(), encoding="utf-8")
    click.echo(report.to_table(), nl=False)


@main.command("overlap")
@click.argument("left")
@click.argument("right")
@handle_errors
def overlap(left, right):
    def resolve(spec: str) -> KeywordSet:
        path = Path(spec)
        if path.exists():
            obj = json.loads(path.read_text(encoding="utf-8"))
            if isinstance(obj, list):
                return KeywordSet(label=path.stem, keywords=frozenset(obj))
            if isinstance(obj, dict) and "keywords" in obj:
                return KeywordSet(label=obj.get("label", path.stem), keywords=frozenset(obj["keywords"]))
            raise ValidationError(f"{spec}: expected a keyword array or {{label, keywords}}")
        return KeywordSet.fixture(spec)

    a, b = resolve(left), resolve(right)
    value = jaccard_overlap(a, b)
    click.echo(
        json.dumps(
            {"left": a.label, "right": b.label, "jaccard": value, "percent": round(100 * value, 2)},
            indent=2,
        )
    )


if __name__ == "__main__":
    main()
