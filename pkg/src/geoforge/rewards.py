"""Rule-guided rewriting, the three-part group reward, the GRPO loss
evaluator, cold-start filtering, and adversarial injection templates.

Reward components (visibility delta, rule-compliance ratio, semantic
fidelity) are z-scored per group with population std and summed; the loss is
the clipped importance-weighted objective over group-standardized advantages
plus a caller-supplied KL penalty. No weight updates happen here: policies
exist only as log-probability pairs.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Protocol, Sequence

from .answers import VisibilityScore
from .corpus import Document, SourceTag
from .errors import (
    ContractError,
    DoubleInjectionError,
    EmptyResponseError,
    MalformedOutputError,
)
from .gateway import Gateway
from .prompts import (
    HIJACK_BEGIN,
    HIJACK_END,
    HIJACK_TEMPLATE,
    POISON_BEGIN,
    POISON_END,
    POISON_TEMPLATE,
    render_rewrite_prompt,
    render_verifier_prompt,
)
from .rules import RuleSet

logger = logging.getLogger(__name__)

KPR_THRESHOLD = 0.8  # cold-start keeps pairs strictly above this recall

_REWRITE_HEADER_RE = re.compile(r"^\s*Rewritten Source:\s*", re.IGNORECASE)

INJECTION_MARKERS = (HIJACK_BEGIN, HIJACK_END, POISON_BEGIN, POISON_END)


class CandidateSource(str, Enum):
    API_TEACHER = "api_teacher"
    MINI_POLICY = "mini_policy"
    BASELINE = "baseline"
    ADVERSARIAL = "adversarial"


class AttackMode(str, Enum):
    HIJACK = "hijack"
    POISON = "poison"


@dataclass(frozen=True)
class RewriteCandidate:
    original: Document
    rewritten: Document
    source: CandidateSource


@dataclass(frozen=True)
class RewardBreakdown:
    outcome: float
    rule: float
    semantic: float
    z_outcome: float
    z_rule: float
    z_semantic: float

    @property
    def total(self) -> float:
        return self.z_outcome + self.z_rule + self.z_semantic


@dataclass(frozen=True)
class GroupSample:
    logprob_new: float
    logprob_old: float
    reward: RewardBreakdown
    candidate: RewriteCandidate | None = None

    def __post_init__(self):
        if not (math.isfinite(self.logprob_new) and math.isfinite(self.logprob_old)):
            raise ContractError("log-probabilities must be finite")


@dataclass(frozen=True)
class GrpoConfig:
    epsilon: float = 0.2
    beta: float = 0.02
    group_size: int = 8
    standardize_advantages: bool = True

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ContractError("epsilon must be in (0, 1)")
        if self.beta < 0:
            raise ContractError("beta must be >= 0")
        if self.group_size < 2:
            raise ContractError("group_size must be >= 2")


def strip_rewrite_header(text: str) -> str:
    return _REWRITE_HEADER_RE.sub("", text, count=1)


def rewrite_document(
    gateway: Gateway,
    doc: Document,
    rules: RuleSet,
    source: CandidateSource = CandidateSource.API_TEACHER,
) -> RewriteCandidate:
    """Rewrite one document under the numbered rule set."""
    if not rules.rules:
        raise ContractError("rule set is empty")
    prompt = render_rewrite_prompt(doc.text, rules.rules)
    response = gateway.run_stage("rewriter", prompt)
    text = strip_rewrite_header(response).strip()
    if not text:
        raise EmptyResponseError("empty rewrite")
    rewritten = Document(id=f"{doc.id}#rewritten", text=text, source_tag=SourceTag.REWRITTEN)
    return RewriteCandidate(original=doc, rewritten=rewritten, source=source)


def parse_verifier_output(raw: str, num_rules: int) -> tuple[list[str], list[int]]:
    """Per-rule labels from the verifier response (1-based rule numbers).

    Missing rule numbers yield "Violated" and are returned for reporting.
    """
    from .rules import strip_code_fences

    parsed = None
    for candidate in (raw, strip_code_fences(raw)):
        try:
            parsed = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        break
    if not isinstance(parsed, dict):
        raise MalformedOutputError("malformed verifier output: expected a JSON object", raw=raw)
    labels: list[str] = []
    missing: list[int] = []
    for number in range(1, num_rules + 1):
        entry = parsed.get(str(number))
        if not isinstance(entry, dict) or "label" not in entry:
            labels.append("Violated")
            missing.append(number)
        else:
            labels.append(str(entry["label"]))
    return labels, missing


def rule_reward(gateway: Gateway, doc: Document, rules: RuleSet) -> float:
    """Fraction of rules the verifier labels Followed; missing labels count
    as Violated (keeps the reward at or below the true ratio)."""
    if not rules.rules:
        raise ContractError("rule reward is undefined for an empty rule set")
    raw = gateway.run_stage("verifier", render_verifier_prompt(rules.rules, doc.text))
    labels, missing = parse_verifier_output(raw, len(rules.rules))
    if missing:
        logger.warning("verifier omitted rule numbers %s; counted as Violated", missing)
    followed = sum(1 for label in labels if label == "Followed")
    return followed / len(rules.rules)


class KeyPointJudge(Protocol):
    """Pluggable judge for key-point fidelity between two documents."""

    def extract_key_points(self, text: str) -> list[str]: ...

    def label_key_point(self, key_point: str, document: str) -> str:
        """One of "supported", "contradicted", or "neutral"."""
        ...


@dataclass(frozen=True)
class SemanticAssessment:
    kpr: float
    kpc: float
    vacuous: bool

    @property
    def score(self) -> float:
        return self.kpr - self.kpc


def assess_semantics(judge: KeyPointJudge, original: Document, rewritten: Document) -> SemanticAssessment:
    points = judge.extract_key_points(original.text)
    if not points:
        return SemanticAssessment(kpr=0.0, kpc=0.0, vacuous=True)
    labels = [judge.label_key_point(point, rewritten.text) for point in points]
    supported = sum(1 for label in labels if label == "supported")
    contradicted = sum(1 for label in labels if label == "contradicted")
    return SemanticAssessment(kpr=supported / len(points), kpc=contradicted / len(points), vacuous=False)


def semantic_reward(judge: KeyPointJudge, original: Document, rewritten: Document) -> float:
    """Key-point recall minus key-point contradiction, in [-1, 1].

    Contradictions are lower-is-better, so they subtract. Zero extracted key
    points is vacuous and scores 0.
    """
    return assess_semantics(judge, original, rewritten).score


def _zscores(values: Sequence[float]) -> list[float]:
    # Constant components standardize to all zeros. The explicit equality
    # check matters: a constant whose mean does not round-trip exactly leaves
    # 1-ulp deviations that would otherwise standardize to order-1 noise. The
    # std check covers the other degenerate case, spreads too small to square
    # without underflowing to zero variance.
    if max(values) == min(values):
        return [0.0] * len(values)
    mean = math.fsum(values) / len(values)
    variance = math.fsum((v - mean) ** 2 for v in values) / len(values)
    std = math.sqrt(variance)
    if std == 0.0:
        return [0.0] * len(values)
    return [(v - mean) / std for v in values]


def group_reward(group: Sequence[tuple[float, float, float]]) -> list[RewardBreakdown]:
    """Z-score (population std) each of outcome/rule/semantic over the group."""
    if len(group) < 2:
        raise ContractError("group size must be >= 2")
    outcomes, rule_fracs, semantics = zip(*group)
    z_out = _zscores(outcomes)
    z_rule = _zscores(rule_fracs)
    z_sem = _zscores(semantics)
    return [
        RewardBreakdown(
            outcome=outcomes[i],
            rule=rule_fracs[i],
            semantic=semantics[i],
            z_outcome=z_out[i],
            z_rule=z_rule[i],
            z_semantic=z_sem[i],
        )
        for i in range(len(group))
    ]


def clipped_surrogate(ratio: float, advantage: float, epsilon: float) -> float:
    """min(ratio * A, clip(ratio, 1-eps, 1+eps) * A)."""
    clipped = min(max(ratio, 1.0 - epsilon), 1.0 + epsilon)
    return min(ratio * advantage, clipped * advantage)


def kl_estimate(samples: Sequence[GroupSample]) -> float:
    """Mean of the standard per-sample estimator exp(d) - d - 1,
    d = logprob_old - logprob_new."""
    deltas = [s.logprob_old - s.logprob_new for s in samples]
    return math.fsum(math.exp(d) - d - 1.0 for d in deltas) / len(deltas)


def grpo_loss(samples: Sequence[GroupSample], config: GrpoConfig, kl: float) -> float:
    """Clipped importance-weighted group loss plus the KL penalty.

    Advantages standardize the group totals with population std (a constant
    group yields all-zero advantages); set
    `config.standardize_advantages=False` to use the totals directly. The KL
    value is supplied by the caller; `kl_estimate` covers desk-scale tests.
    """
    if len(samples) != config.group_size:
        raise ContractError(
            f"group size mismatch: got {len(samples)}, config says {config.group_size}"
        )
    totals = [s.reward.total for s in samples]
    if config.standardize_advantages:
        advantages = _zscores(totals)
    else:
        advantages = list(totals)
    terms = [
        clipped_surrogate(math.exp(s.logprob_new - s.logprob_old), a, config.epsilon)
        for s, a in zip(samples, advantages)
    ]
    return -(math.fsum(terms) / len(terms)) + config.beta * kl


@dataclass(frozen=True)
class ColdStartPair:
    before: VisibilityScore
    after: VisibilityScore
    kpr: float
    kpc: float
    id: str = ""


def cold_start_passes(pair: ColdStartPair) -> bool:
    return (
        pair.after.word > pair.before.word
        and pair.after.pos > pair.before.pos
        and pair.after.overall > pair.before.overall
        and pair.kpr > KPR_THRESHOLD
        and pair.kpc == 0
    )


def cold_start_filter(pairs: Sequence[ColdStartPair]) -> list[ColdStartPair]:
    """Keep pairs with strictly improved Word/Pos/Overall, recall above the
    threshold, and zero contradiction."""
    return [pair for pair in pairs if cold_start_passes(pair)]


def inject_adversarial(doc: Document, mode: AttackMode) -> RewriteCandidate:
    """Wrap the document verbatim in the chosen injection template."""
    if any(marker in doc.text for marker in INJECTION_MARKERS):
        raise DoubleInjectionError(f"document {doc.id!r} already carries an injection marker")
    template = HIJACK_TEMPLATE if mode == AttackMode.HIJACK else POISON_TEMPLATE
    injected = Document(
        id=f"{doc.id}#{mode.value}",
        text=template.format(document=doc.text),
        source_tag=SourceTag.INJECTED,
    )
    return RewriteCandidate(original=doc, rewritten=injected, source=CandidateSource.ADVERSARIAL)
