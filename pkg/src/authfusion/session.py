"""Three-phase authentication sessions and a population simulator.

A session moves forward through pre-authentication (passive evidence
only, can unlock a Basic tier early), active authentication (the policy
decision that grants Full access), and continuous monitoring (periodic
behavior validation that can revoke). The machine itself is a pure
transition function over immutable states; all randomness lives in the
simulator, which samples factor outcomes from their FAR/FRR and feeds
them in as events.

The simulator has two engines over one shared sampling layer: "machine"
drives every trial through SessionMachine.step, "vector" aggregates the
same sampled outcomes with array arithmetic. They produce identical
reports (the test suite holds them to that), so the fast path is safe for
large trial counts; scenarios with context changes always use the
machine. Sampling is sharded with per-shard derived seeds and a
fixed-order reduction, making reports byte-stable for a given seed at any
worker count.
"""

from __future__ import annotations

import math
import statistics
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from types import MappingProxyType
from typing import Any, Mapping, Sequence

import numpy as np

from . import configio
from .catalog import ActionMode, Factor, gate_factors
from .context import DEFAULT_CONTEXT_RULES, ContextRule, ContextState, SessionPhase
from .errors import AuthFusionError, ConfigError, EvaluationError
from .fusion import EvidenceRecord, Policy, StrategyKind, decide
from .trust import effective_weights

_PRE = SessionPhase.PRE_AUTHENTICATION
_ACT = SessionPhase.ACTIVE_AUTHENTICATION
_MON = SessionPhase.CONTINUOUS_MONITORING


class GrantTier(Enum):
    BASIC = "basic"
    FULL = "full"


class Terminal(Enum):
    GRANTED = "granted"
    DENIED = "denied"
    REVOKED = "revoked"


@dataclass(frozen=True)
class ArrivalOfEvidence:
    record: EvidenceRecord

    @property
    def at(self) -> float:
        return self.record.observed_at


@dataclass(frozen=True)
class Tick:
    at: float


@dataclass(frozen=True)
class PhaseTimeout:
    """Deadline for one phase; ignored unless the session is in it."""

    at: float
    phase: SessionPhase


@dataclass(frozen=True)
class MonitorConfig:
    """Continuous-monitoring operating point.

    The (window, detection_accuracy) pair states the probability that an
    impostor is flagged within one window. Checks run every
    check_interval seconds (defaults to the window), with the per-check
    probability derived so the per-window rate is preserved; false_alarm
    is the per-window probability of flagging the legitimate user.
    """

    window: float = 150.0
    detection_accuracy: float = 0.95
    check_interval: float | None = None
    false_alarm: float = 0.01

    def __post_init__(self):
        if not self.window > 0.0:
            raise ConfigError("window must be positive", field="monitor.window")
        if not 0.0 < self.detection_accuracy < 1.0:
            raise ConfigError("detection_accuracy must lie in (0, 1)", field="monitor.detection_accuracy")
        if not 0.0 <= self.false_alarm < 1.0:
            raise ConfigError("false_alarm must lie in [0, 1)", field="monitor.false_alarm")
        if self.check_interval is None:
            object.__setattr__(self, "check_interval", self.window)
        if not self.check_interval > 0.0:
            raise ConfigError("check_interval must be positive", field="monitor.check_interval")

    def _per_check(self, per_window: float) -> float:
        ratio = self.check_interval / self.window
        # one check per window means the per-window rate verbatim, with no
        # 1 - (1 - x) round trip to smudge it
        if ratio == 1.0:
            return per_window
        return 1.0 - (1.0 - per_window) ** ratio

    @property
    def per_check_detection(self) -> float:
        return self._per_check(self.detection_accuracy)

    @property
    def per_check_false_alarm(self) -> float:
        return self._per_check(self.false_alarm)


@dataclass(frozen=True)
class SessionConfig:
    """Session-level knobs: thresholds, evidence lifetime, horizons.

    t_basic defaults to half the full-grant threshold (T/2 for weighted
    policies, half the effective pass count for counting ones).
    Pre-authentication evidence older than staleness_horizon at the start
    of active authentication is discarded. monitoring_horizon bounds the
    monitored part of a simulated session and defaults to one window.
    """

    t_basic: float | None = None
    staleness_horizon: float = 300.0
    monitor: MonitorConfig = field(default_factory=MonitorConfig)
    monitoring_horizon: float | None = None
    usability_budget: float = 2.0

    def __post_init__(self):
        if self.t_basic is not None and self.t_basic < 0.0:
            raise ConfigError("t_basic must be non-negative", field="session.t_basic")
        if self.staleness_horizon < 0.0:
            raise ConfigError("staleness_horizon must be non-negative", field="session.staleness_horizon")
        if self.monitoring_horizon is not None and not self.monitoring_horizon > 0.0:
            raise ConfigError("monitoring_horizon must be positive", field="session.monitoring_horizon")
        if not self.usability_budget > 0.0:
            raise ConfigError("usability_budget must be positive", field="session.usability_budget")

    @property
    def horizon(self) -> float:
        return self.monitoring_horizon if self.monitoring_horizon is not None else self.monitor.window


@dataclass(frozen=True)
class SessionState:
    """Immutable session snapshot. step() returns a new one."""

    phase: SessionPhase = _PRE
    score: float = 0.0
    grant_tier: GrantTier | None = None
    elapsed: float = 0.0
    evidence: tuple[EvidenceRecord, ...] = ()
    flagged: tuple[bool, ...] = ()  # aligned with evidence: recorded, never scored
    terminal: Terminal | None = None
    basic_granted_at: float | None = None
    full_granted_at: float | None = None
    monitor_started_at: float | None = None
    revoked_at: float | None = None


class SessionMachine:
    """Pure transition function over SessionState, bound to one catalog,
    policy, and session config.

    Phase rules: pre-authentication scores only passive-capable factors
    usable in that phase and can raise the tier to Basic; the active
    decision runs once every expected factor has reported or the phase
    times out, with absent factors counted as failed checks; monitoring
    revokes on any failed validation from a monitoring-capable factor,
    and a session that reaches its monitoring deadline ends Granted.
    Evidence from factors outside the current phase's usable set is
    recorded but flagged and never scored.
    """

    def __init__(
        self,
        catalog: Sequence[Factor],
        policy: Policy,
        *,
        ctx: ContextState | None = None,
        config: SessionConfig | None = None,
        rules: Sequence[ContextRule] = DEFAULT_CONTEXT_RULES,
    ):
        self._catalog = list(catalog)
        self._index = {f.id: f for f in self._catalog}
        if len(self._index) != len(self._catalog):
            raise ConfigError("catalog contains duplicate factor ids")
        self._policy = policy
        self._ctx = ctx if ctx is not None else ContextState.nominal()
        self._config = config if config is not None else SessionConfig()
        self._rules = tuple(rules)
        self._weighted = policy.strategy.kind is StrategyKind.WEIGHTED
        if self._weighted:
            # factors outside the weights map are simply out of scope
            self._scope = [f for f in self._catalog if f.id in policy.weights]
            if not self._scope:
                raise ConfigError("policy weights cover no catalog factor", field="weights")
        else:
            self._scope = self._catalog
        self._scope_ids = frozenset(f.id for f in self._scope)
        self._gate_cache: dict[tuple[int, SessionPhase], tuple[ContextState, frozenset[str]]] = {}
        self._eff_cache: dict[int, tuple[ContextState, dict[str, float]]] = {}
        self._resolve_thresholds()

    # -- static context-dependent sets -------------------------------------

    def _phase_ids(self, ctx: ContextState, phase: SessionPhase) -> frozenset[str]:
        key = (id(ctx), phase)
        hit = self._gate_cache.get(key)
        if hit is not None and hit[0] is ctx:
            return hit[1]
        gate = gate_factors(self._catalog, ctx.with_updates({}, phase=phase), self._rules)
        ids = frozenset(f.id for f in gate.available)
        if phase is _PRE:
            ids = frozenset(
                fid for fid in ids if self._index[fid].action is not ActionMode.ACTIVE
            )
        self._gate_cache[key] = (ctx, ids)
        return ids

    def expected_factors(self, ctx: ContextState | None = None) -> tuple[str, ...]:
        """Factors whose evidence the active-phase decision waits for."""
        ctx = ctx if ctx is not None else self._ctx
        usable = self._phase_ids(ctx, _ACT)
        return tuple(f.id for f in self._catalog if f.id in usable and f.id in self._scope_ids)

    def effective_policy(self, ctx: ContextState | None = None) -> Policy:
        """The policy with context-adapted weights (weighted rule only)."""
        ctx = ctx if ctx is not None else self._ctx
        if not self._weighted:
            return self._policy
        hit = self._eff_cache.get(id(ctx))
        if hit is not None and hit[0] is ctx:
            weights = hit[1]
        else:
            flat = ContextState(conditions=dict(ctx.conditions))
            weights = effective_weights(self._policy, self._scope, flat, self._rules)
            self._eff_cache[id(ctx)] = (ctx, weights)
        return self._policy.with_weights(weights)

    def _resolve_thresholds(self) -> None:
        cfg = self._config
        if self._weighted:
            full = self._policy.strategy.threshold
            basic = cfg.t_basic if cfg.t_basic is not None else full / 2.0
            if full > 0.0 and basic >= full:
                raise ConfigError(
                    f"t_basic={basic} must stay below the full threshold {full}",
                    field="session.t_basic",
                )
        else:
            n_expected = len(self.expected_factors(self._ctx))
            kind = self._policy.strategy.kind
            if kind is StrategyKind.ALL:
                k_eff = n_expected
            elif kind is StrategyKind.ANY:
                k_eff = 1
            else:
                k_eff = self._policy.strategy.k
            full = float(k_eff)
            basic = cfg.t_basic if cfg.t_basic is not None else k_eff / 2.0
            if full > 0.0 and basic >= full:
                raise ConfigError(
                    f"t_basic={basic} must stay below the effective pass count {k_eff}",
                    field="session.t_basic",
                )
        self.t_basic = basic
        self.t_full = full

    @property
    def config(self) -> SessionConfig:
        return self._config

    @property
    def context(self) -> ContextState:
        return self._ctx

    # -- transitions --------------------------------------------------------

    def initial_state(self) -> SessionState:
        return SessionState()

    def step(self, state: SessionState, event, ctx: ContextState | None = None) -> SessionState:
        """Apply one event. Terminal states absorb everything."""
        ctx = ctx if ctx is not None else self._ctx
        if state.terminal is not None:
            return state
        at = float(event.at)
        if at < state.elapsed:
            raise EvaluationError(
                f"event at t={at} precedes the session clock t={state.elapsed}"
            )
        if isinstance(event, Tick):
            return replace(state, elapsed=at)
        if isinstance(event, ArrivalOfEvidence):
            return self._arrival(state, event.record, ctx, at)
        if isinstance(event, PhaseTimeout):
            if event.phase is not state.phase:
                return replace(state, elapsed=at)
            if state.phase is _PRE:
                return self._begin_active(state, at)
            if state.phase is _ACT:
                return self._conclude_active(state, ctx, at)
            return replace(state, elapsed=at, terminal=Terminal.GRANTED)
        raise EvaluationError(f"unsupported event type {type(event).__name__}")

    def run(self, events: Sequence, ctx: ContextState | None = None) -> SessionState:
        state = self.initial_state()
        for event in events:
            state = self.step(state, event, ctx)
        return state

    def _arrival(self, state: SessionState, rec: EvidenceRecord, ctx: ContextState, at: float) -> SessionState:
        if rec.factor_id not in self._index:
            raise ConfigError(f"evidence references unknown factor '{rec.factor_id}'", field=rec.factor_id)
        if state.phase is _PRE:
            scorable = rec.factor_id in self._phase_ids(ctx, _PRE)
        elif state.phase is _ACT:
            scorable = rec.factor_id in self.expected_factors(ctx)
        else:
            scorable = rec.factor_id in self._phase_ids(ctx, _MON)
        state = replace(
            state,
            elapsed=at,
            evidence=state.evidence + (rec,),
            flagged=state.flagged + (not scorable,),
        )
        if not scorable:
            return state

        if state.phase is _PRE:
            score = self._aggregate(self._latest(state), ctx)
            state = replace(state, score=score)
            if state.grant_tier is None and score > self.t_basic:
                state = replace(state, grant_tier=GrantTier.BASIC, basic_granted_at=at)
            return state
        if state.phase is _ACT:
            latest = self._latest(state)
            expected = self.expected_factors(ctx)
            state = replace(state, score=self._aggregate(latest, ctx))
            if all(fid in latest for fid in expected):
                return self._decide_full(state, ctx, at)
            return state
        # monitoring: any failed validation revokes on the spot
        if rec.decision == 0:
            return replace(state, terminal=Terminal.REVOKED, revoked_at=at)
        return state

    def _begin_active(self, state: SessionState, at: float) -> SessionState:
        # pre-auth evidence past the staleness horizon never reaches decide()
        cutoff = at - self._config.staleness_horizon
        kept = [
            (rec, flag)
            for rec, flag in zip(state.evidence, state.flagged)
            if rec.observed_at >= cutoff
        ]
        return replace(
            state,
            phase=_ACT,
            elapsed=at,
            evidence=tuple(rec for rec, _ in kept),
            flagged=tuple(flag for _, flag in kept),
        )

    def _conclude_active(self, state: SessionState, ctx: ContextState, at: float) -> SessionState:
        return self._decide_full(replace(state, elapsed=at), ctx, at)

    def _decide_full(self, state: SessionState, ctx: ContextState, at: float) -> SessionState:
        expected = self.expected_factors(ctx)
        if not expected:
            return replace(state, terminal=Terminal.DENIED)
        latest = self._latest(state)
        records = [
            latest.get(fid, EvidenceRecord(factor_id=fid, decision=0, observed_at=at))
            for fid in expected
        ]
        decision = decide(records, self.effective_policy(ctx), self._catalog)
        score = decision.score if decision.score is not None else float(decision.passed_count)
        if not decision.granted:
            return replace(state, score=score, terminal=Terminal.DENIED)
        return replace(
            state,
            phase=_MON,
            score=score,
            grant_tier=GrantTier.FULL,
            full_granted_at=at,
            monitor_started_at=at,
        )

    def _latest(self, state: SessionState) -> dict[str, EvidenceRecord]:
        latest: dict[str, EvidenceRecord] = {}
        for rec, flag in zip(state.evidence, state.flagged):
            if not flag:
                latest[rec.factor_id] = rec
        return latest

    def _aggregate(self, latest: Mapping[str, EvidenceRecord], ctx: ContextState) -> float:
        if not self._weighted:
            return float(sum(rec.decision for rec in latest.values()))
        weights = self.effective_policy(ctx).weights
        terms = []
        for fid, rec in latest.items():
            delta = float(rec.decision)
            if self._policy.use_likelihood and rec.likelihood is not None:
                delta = rec.likelihood
            terms.append(delta * self._index[fid].vendor_accuracy * rec.trust * weights.get(fid, 0.0))
        return math.fsum(terms)


# ---------------------------------------------------------------------------
# Scenarios


@dataclass(frozen=True)
class Scenario:
    """Population and environment description for a simulation run.

    factors limits which catalog factors produce evidence (None means
    every factor the policy can score). takeover models a post-grant
    impostor: sessions authenticate with legitimate-user rates but
    monitoring validates against impostor behavior. context_changes apply
    condition updates mid-session at the given offsets and force the
    machine engine.
    """

    name: str = "scenario"
    adversary_fraction: float = 0.0
    takeover: bool = False
    factors: tuple[str, ...] | None = None
    trust: Mapping[str, float] = field(default_factory=dict)
    conditions: Mapping[str, Any] = field(default_factory=dict)
    context_changes: tuple[tuple[float, Mapping[str, Any]], ...] = ()
    monitor_factor: str | None = None
    config: SessionConfig = field(default_factory=SessionConfig)
    policy_path: str | None = None
    catalog_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "trust", MappingProxyType(dict(self.trust)))
        object.__setattr__(self, "conditions", MappingProxyType(dict(self.conditions)))
        object.__setattr__(
            self,
            "context_changes",
            tuple((float(at), MappingProxyType(dict(updates))) for at, updates in self.context_changes),
        )
        if self.factors is not None:
            object.__setattr__(self, "factors", tuple(self.factors))

    def initial_context(self) -> ContextState:
        return ContextState(conditions=dict(self.conditions))


def load_scenario(source: str) -> Scenario:
    """Parse a scenario file (YAML text); errors carry field paths and lines."""
    data, lines = configio.load_document(source, what="scenario")
    root = configio.Section(data, lines, what="scenario")
    configio.check_schema_version(root)
    root.reject_unknown(
        {
            "schema_version", "name", "adversary_fraction", "takeover", "factors",
            "trust", "context", "monitor", "session", "monitor_factor",
            "policy_path", "catalog_path",
        }
    )
    fraction = float(root.get("adversary_fraction", float, 0.0))
    if not 0.0 <= fraction <= 1.0:
        raise root.error("adversary_fraction", "must lie in [0, 1]")

    factors = None
    if "factors" in root.data:
        raw = root.require("factors", list)
        if not all(isinstance(x, str) for x in raw):
            raise root.error("factors", "must be a list of factor ids")
        factors = tuple(raw)

    trust = {}
    tsec = root.section("trust")
    if tsec is not None:
        for fid in tsec.data:
            value = float(tsec.require(fid, float))
            if not 0.0 <= value <= 1.0:
                raise tsec.error(fid, "trust must lie in [0, 1]")
            trust[fid] = value

    conditions: dict[str, Any] = {}
    changes: list[tuple[float, dict[str, Any]]] = []
    csec = root.section("context")
    if csec is not None:
        csec.reject_unknown({"initial", "changes"})
        isec = csec.section("initial")
        if isec is not None:
            conditions = dict(isec.data)
        for entry in csec.items("changes") if "changes" in csec.data else []:
            entry.reject_unknown({"at", "set"})
            at = float(entry.require("at", float))
            if at < 0.0:
                raise entry.error("at", "must be non-negative")
            setsec = entry.section("set", required=True)
            changes.append((at, dict(setsec.data)))
        if any(b[0] < a[0] for a, b in zip(changes, changes[1:])):
            raise csec.error("changes", "change times must be non-decreasing")

    monitor = MonitorConfig()
    msec = root.section("monitor")
    if msec is not None:
        msec.reject_unknown({"window", "detection_accuracy", "check_interval", "false_alarm"})
        try:
            monitor = MonitorConfig(
                window=float(msec.get("window", float, 150.0)),
                detection_accuracy=float(msec.get("detection_accuracy", float, 0.95)),
                check_interval=(
                    float(msec.require("check_interval", float)) if "check_interval" in msec.data else None
                ),
                false_alarm=float(msec.get("false_alarm", float, 0.01)),
            )
        except ConfigError as exc:
            raise msec.error(None, str(exc)) from exc

    config = SessionConfig(monitor=monitor)
    ssec = root.section("session")
    if ssec is not None:
        ssec.reject_unknown({"t_basic", "staleness_horizon", "monitoring_horizon", "usability_budget"})
        try:
            config = SessionConfig(
                t_basic=(float(ssec.require("t_basic", float)) if "t_basic" in ssec.data else None),
                staleness_horizon=float(ssec.get("staleness_horizon", float, 300.0)),
                monitor=monitor,
                monitoring_horizon=(
                    float(ssec.require("monitoring_horizon", float))
                    if "monitoring_horizon" in ssec.data
                    else None
                ),
                usability_budget=float(ssec.get("usability_budget", float, 2.0)),
            )
        except ConfigError as exc:
            raise ssec.error(None, str(exc)) from exc

    return Scenario(
        name=root.get("name", str, "scenario"),
        adversary_fraction=fraction,
        takeover=bool(root.get("takeover", bool, False)),
        factors=factors,
        trust=trust,
        conditions=conditions,
        context_changes=tuple(changes),
        monitor_factor=root.get("monitor_factor", str),
        config=config,
        policy_path=root.get("policy_path", str),
        catalog_path=root.get("catalog_path", str),
    )


def validate_scenario(scenario: Scenario, catalog: Sequence[Factor], policy: Policy) -> list[str]:
    """Every problem found, as messages; empty means runnable."""
    problems: list[str] = []
    ids = {f.id for f in catalog}
    if not 0.0 <= scenario.adversary_fraction <= 1.0:
        problems.append(f"adversary_fraction {scenario.adversary_fraction} outside [0, 1]")
    if scenario.factors is not None:
        if not scenario.factors:
            problems.append("factors list is empty")
        seen: set[str] = set()
        for fid in scenario.factors:
            if fid not in ids:
                problems.append(f"unknown factor '{fid}'")
            elif fid in seen:
                problems.append(f"factor '{fid}' listed twice")
            seen.add(fid)
    for fid in scenario.trust:
        if fid not in ids:
            problems.append(f"trust entry for unknown factor '{fid}'")
    if scenario.monitor_factor is not None:
        if scenario.monitor_factor not in ids:
            problems.append(f"unknown monitor_factor '{scenario.monitor_factor}'")
        else:
            factor = next(f for f in catalog if f.id == scenario.monitor_factor)
            if _MON not in factor.phases:
                problems.append(f"monitor_factor '{scenario.monitor_factor}' is not monitoring-capable")
    if policy.strategy.kind is StrategyKind.WEIGHTED:
        for fid in scenario.factors or ():
            if fid in ids and fid not in policy.weights:
                problems.append(f"policy assigns no weight to scenario factor '{fid}'")
    for at, _ in scenario.context_changes:
        if at < 0.0:
            problems.append(f"context change at t={at} precedes the session start")
    try:
        SessionMachine(catalog, policy, ctx=scenario.initial_context(), config=scenario.config)
    except AuthFusionError as exc:
        problems.append(str(exc))
    return problems


# ---------------------------------------------------------------------------
# Simulation plan: fixed per-session event layout shared by both engines

_MAX_CHECKS = 10_000


@dataclass(frozen=True)
class _Firing:
    factor_id: str
    at: float
    trust: float
    weight: float  # mu * tau * phi' (weighted policies; unused otherwise)


@dataclass(frozen=True)
class _Plan:
    """Deterministic per-session event layout.

    Factors already covered by fresh pre-authentication evidence are not
    prompted again in the active phase; the decision consumes their pre
    sample. decision_cols maps each expected factor that will have
    evidence to its column in the sampled outcome matrix (pre block
    first); expected factors with no column count as failed checks. The
    active deadline waits for every still-needed factor's duration, so
    the decision lands at active_end in every session.
    """

    pre: tuple[_Firing, ...]
    active: tuple[_Firing, ...]
    pre_end: float
    active_end: float
    decision_cols: tuple[int, ...]
    decision_weights: tuple[float, ...]
    check_times: tuple[float, ...]
    monitor_factor: str | None
    monitor_trust: float
    q_detect: float
    q_false_alarm: float
    kind: StrategyKind
    k_eff: int
    threshold: float
    t_basic: float
    n_expected: int
    horizon_end: float
    vector_ok: bool


def _build_plan(scenario: Scenario, catalog: Sequence[Factor], policy: Policy) -> tuple[SessionMachine, _Plan]:
    ctx = scenario.initial_context()
    machine = SessionMachine(catalog, policy, ctx=ctx, config=scenario.config)
    index = {f.id: f for f in catalog}

    if scenario.factors is not None:
        chosen = [index[fid] for fid in scenario.factors]
    else:
        chosen = [f for f in catalog if f.id in machine._scope_ids]
    chosen_ids = {f.id for f in chosen}

    eff_weights = machine.effective_policy(ctx).weights if policy.strategy.kind is StrategyKind.WEIGHTED else {}

    def firing(f: Factor, at: float) -> _Firing:
        tau = scenario.trust.get(f.id, 1.0)
        return _Firing(f.id, at, tau, f.vendor_accuracy * tau * eff_weights.get(f.id, 0.0))

    pre_ids = machine._phase_ids(ctx, _PRE)
    pre = tuple(firing(f, f.duration.seconds) for f in chosen if f.id in pre_ids)
    pre_end = max((x.at for x in pre), default=0.0)

    expected = machine.expected_factors(ctx)
    # pre evidence that will still be fresh at the phase transition covers
    # its factor; the rest must be produced during active authentication
    cutoff = pre_end - scenario.config.staleness_horizon
    fresh = {x.factor_id: i for i, x in enumerate(pre) if x.at >= cutoff}
    needed = [fid for fid in expected if fid not in fresh]
    active = tuple(
        firing(index[fid], pre_end + index[fid].duration.seconds)
        for fid in needed
        if fid in chosen_ids
    )
    active_end = pre_end + max((index[fid].duration.seconds for fid in needed), default=0.0)

    act_col = {x.factor_id: len(pre) + j for j, x in enumerate(active)}
    decision_cols: list[int] = []
    decision_weights: list[float] = []
    for fid in expected:
        col = fresh.get(fid, act_col.get(fid))
        if col is not None:
            decision_cols.append(col)
            source = pre[col] if col < len(pre) else active[col - len(pre)]
            decision_weights.append(source.weight)

    monitor_factor = scenario.monitor_factor
    mon_ids = machine._phase_ids(ctx, _MON)
    if monitor_factor is not None and monitor_factor not in mon_ids:
        raise ConfigError(
            f"monitor_factor '{monitor_factor}' is unusable in the monitoring phase under this context",
            field="monitor_factor",
        )
    if monitor_factor is None:
        monitor_factor = next((f.id for f in chosen if f.id in mon_ids), None)
    check_times: tuple[float, ...] = ()
    if monitor_factor is not None:
        interval = scenario.config.monitor.check_interval
        n_checks = int(math.floor(scenario.config.horizon / interval + 1e-9))
        if n_checks > _MAX_CHECKS:
            raise ConfigError(
                f"monitoring schedule has {n_checks} checks; cap is {_MAX_CHECKS}",
                field="session.monitoring_horizon",
            )
        check_times = tuple(active_end + (c + 1) * interval for c in range(n_checks))

    kind = policy.strategy.kind
    if kind is StrategyKind.ALL:
        k_eff = len(expected)
    elif kind is StrategyKind.KOFN:
        k_eff = policy.strategy.k
    else:
        k_eff = 1

    plan = _Plan(
        pre=pre,
        active=active,
        pre_end=pre_end,
        active_end=active_end,
        decision_cols=tuple(decision_cols),
        decision_weights=tuple(decision_weights),
        check_times=check_times,
        monitor_factor=monitor_factor,
        monitor_trust=scenario.trust.get(monitor_factor, 1.0) if monitor_factor else 1.0,
        q_detect=scenario.config.monitor.per_check_detection,
        q_false_alarm=scenario.config.monitor.per_check_false_alarm,
        kind=kind,
        k_eff=k_eff,
        threshold=policy.strategy.threshold if kind is StrategyKind.WEIGHTED else float(k_eff),
        t_basic=machine.t_basic,
        n_expected=len(expected),
        horizon_end=active_end + scenario.config.horizon,
        vector_ok=not scenario.context_changes,
    )
    return machine, plan


def _sample_shard(child: np.random.SeedSequence, size: int, plan: _Plan, scenario: Scenario, index):
    """Draw one shard's randomness in a fixed order: population, one
    uniform per scheduled firing, one per monitoring check."""
    rng = np.random.default_rng(child)
    adversary = rng.random(size) < scenario.adversary_fraction
    firings = plan.pre + plan.active
    u = rng.random((size, len(firings)))
    far = np.array([index[x.factor_id].far for x in firings])
    legit = np.array([1.0 - index[x.factor_id].frr for x in firings])
    passes = u < np.where(adversary[:, None], far, legit)
    u_checks = rng.random((size, len(plan.check_times)))
    q = np.where(adversary | scenario.takeover, plan.q_detect, plan.q_false_alarm)
    fails = u_checks < q[:, None]
    return adversary, passes, fails


@dataclass
class _Tally:
    sessions: int = 0
    adversaries: int = 0
    false_grants: int = 0
    false_denials: int = 0
    basic_grants: int = 0
    full_grants: int = 0
    revocations: int = 0
    false_revocations: int = 0
    full_time_sum: float = 0.0
    latencies: Counter = field(default_factory=Counter)
    firings: Counter = field(default_factory=Counter)


@lru_cache(maxsize=64)
def _score_table(weights: tuple[float, ...]) -> "np.ndarray | None":
    """Exactly rounded subset-sum per pass mask; None above the size cap."""
    n = len(weights)
    if n == 0 or n > 16:
        return None
    table = np.empty(1 << n)
    for mask in range(1 << n):
        table[mask] = math.fsum(weights[j] for j in range(n) if mask >> j & 1)
    return table


def _exact_weighted(passes: np.ndarray, weights: tuple[float, ...]) -> np.ndarray:
    """Per-row weighted score with math.fsum rounding, so the vector
    engine compares against thresholds in exactly the same bits decide()
    produces in the machine engine."""
    if passes.shape[1] == 0:
        return np.zeros(len(passes))
    table = _score_table(weights)
    if table is not None:
        powers = 1 << np.arange(passes.shape[1], dtype=np.int64)
        return table[passes.astype(np.int64) @ powers]
    return np.fromiter(
        (math.fsum(weights[j] for j in np.flatnonzero(row)) for row in passes),
        dtype=float,
        count=len(passes),
    )


def _vector_tally(plan: _Plan, adversary, passes, fails) -> _Tally:
    size = len(adversary)
    n_pre = len(plan.pre)
    pre_passes = passes[:, :n_pre]
    dec_passes = passes[:, list(plan.decision_cols)]

    if plan.kind is StrategyKind.WEIGHTED:
        basic = _exact_weighted(pre_passes, tuple(x.weight for x in plan.pre)) > plan.t_basic
        grant = _exact_weighted(dec_passes, plan.decision_weights) > plan.threshold
        if plan.n_expected == 0:
            grant = np.zeros(size, dtype=bool)
    else:
        basic = pre_passes.sum(axis=1) > plan.t_basic
        if plan.n_expected == 0:
            grant = np.zeros(size, dtype=bool)
        elif plan.kind is StrategyKind.ALL:
            # expected factors with no evidence source count as failed checks
            grant = dec_passes.all(axis=1) & (len(plan.decision_cols) == plan.n_expected)
        elif plan.kind is StrategyKind.ANY:
            grant = dec_passes.any(axis=1)
        else:
            grant = dec_passes.sum(axis=1) >= plan.k_eff

    tally = _Tally()
    tally.sessions = size
    tally.adversaries = int(adversary.sum())
    tally.basic_grants = int(basic.sum())
    tally.full_grants = int(grant.sum())
    tally.false_grants = int((grant & adversary).sum())
    tally.false_denials = int((~grant & ~adversary).sum())
    tally.full_time_sum = tally.full_grants * plan.active_end

    n_checks = len(plan.check_times)
    monitor_fired = 0
    if n_checks and plan.monitor_factor is not None:
        any_fail = fails.any(axis=1)
        first = fails.argmax(axis=1)
        revoked = grant & any_fail
        tally.revocations = int(revoked.sum())
        tally.false_revocations = int((revoked & ~adversary).sum())
        for c in range(n_checks):
            hits = int((revoked & (first == c)).sum())
            if hits:
                tally.latencies[plan.check_times[c] - plan.active_end] += hits
        # sessions run every check until revocation or the horizon
        monitor_fired = tally.full_grants * n_checks - int(((n_checks - 1 - first) * revoked).sum())
    for x in plan.pre:
        tally.firings[(_PRE.value, x.factor_id)] += size
    for x in plan.active:
        tally.firings[(_ACT.value, x.factor_id)] += size
    if monitor_fired:
        tally.firings[(_MON.value, plan.monitor_factor)] += monitor_fired
    return tally


def _context_timeline(scenario: Scenario) -> list[tuple[float, ContextState]]:
    timeline = [(0.0, scenario.initial_context())]
    for at, updates in scenario.context_changes:
        timeline.append((at, timeline[-1][1].with_updates(updates)))
    return timeline


def _machine_tally(
    plan: _Plan,
    scenario: Scenario,
    machine: SessionMachine,
    adversary,
    passes,
    fails,
    collect_times: list | None = None,
) -> _Tally:
    timeline = _context_timeline(scenario)
    n_pre = len(plan.pre)

    # (time, kind, payload) template; instantiated with sampled outcomes per row
    events: list[tuple[float, str, Any]] = []
    for col, x in enumerate(plan.pre):
        events.append((x.at, "evidence", (x, col, _PRE)))
    events.append((plan.pre_end, "timeout", _PRE))
    for col, x in enumerate(plan.active):
        events.append((x.at, "evidence", (x, n_pre + col, _ACT)))
    events.append((plan.active_end, "timeout", _ACT))
    for c, t in enumerate(plan.check_times):
        events.append((t, "check", c))
    events.append((plan.horizon_end, "timeout", _MON))
    # chronological dispatch; stable sort keeps arrivals ahead of the
    # phase timeout they share a timestamp with
    events.sort(key=lambda e: e[0])

    tally = _Tally()
    tally.sessions = len(adversary)
    tally.adversaries = int(adversary.sum())
    full_times: list[float] = []

    for i in range(len(adversary)):
        state = machine.initial_state()
        ctx_idx = 0
        for at, kind, payload in events:
            while ctx_idx + 1 < len(timeline) and timeline[ctx_idx + 1][0] <= at:
                ctx_idx += 1
            ctx = timeline[ctx_idx][1]
            if kind == "timeout":
                event = PhaseTimeout(at=at, phase=payload)
            elif kind == "evidence":
                x, col, phase = payload
                event = ArrivalOfEvidence(
                    EvidenceRecord(
                        factor_id=x.factor_id,
                        decision=int(passes[i, col]),
                        trust=x.trust,
                        observed_at=at,
                    )
                )
            else:
                event = ArrivalOfEvidence(
                    EvidenceRecord(
                        factor_id=plan.monitor_factor,
                        decision=0 if fails[i, payload] else 1,
                        trust=plan.monitor_trust,
                        observed_at=at,
                    )
                )
            live = state.terminal is None
            if live and kind == "evidence":
                tally.firings[(payload[2].value, payload[0].factor_id)] += 1
            elif live and kind == "check" and state.phase is _MON:
                tally.firings[(_MON.value, plan.monitor_factor)] += 1
            state = machine.step(state, event, ctx=ctx)

        adv = bool(adversary[i])
        if state.basic_granted_at is not None:
            tally.basic_grants += 1
        if state.full_granted_at is not None:
            tally.full_grants += 1
            full_times.append(state.full_granted_at)
            if adv:
                tally.false_grants += 1
        elif not adv:
            tally.false_denials += 1
        if state.terminal is Terminal.REVOKED:
            tally.revocations += 1
            if not adv:
                tally.false_revocations += 1
            tally.latencies[state.revoked_at - state.monitor_started_at] += 1
        if collect_times is not None:
            collect_times.append(
                (state.basic_granted_at, state.full_granted_at, adv)
            )
    tally.full_time_sum = math.fsum(full_times)
    return tally


# ---------------------------------------------------------------------------
# Reports


@dataclass(frozen=True)
class SimulationReport:
    """Aggregate outcome of a batch of simulated sessions.

    false_grants counts adversary sessions that ever reached Full access
    (revocation afterwards does not undo the grant); false_denials counts
    legitimate sessions denied at active authentication. Revocation
    latency is measured from the start of monitoring.
    """

    sessions_run: int
    adversary_sessions: int
    legitimate_sessions: int
    false_grants: int
    false_denials: int
    basic_grants: int
    full_grants: int
    revocations: int
    false_revocations: int
    mean_time_to_full_grant: float | None
    revocation_latency_distribution: Mapping[float, int]
    factor_firings: Mapping[str, Mapping[str, int]]
    seed: int

    def __post_init__(self):
        object.__setattr__(
            self,
            "revocation_latency_distribution",
            MappingProxyType(dict(sorted(self.revocation_latency_distribution.items()))),
        )
        object.__setattr__(
            self,
            "factor_firings",
            MappingProxyType(
                {
                    phase: MappingProxyType(dict(sorted(counts.items())))
                    for phase, counts in sorted(self.factor_firings.items())
                }
            ),
        )
        checks = [
            self.sessions_run == self.adversary_sessions + self.legitimate_sessions,
            0 <= self.false_grants <= self.adversary_sessions,
            0 <= self.false_denials <= self.legitimate_sessions,
            self.false_grants <= self.full_grants <= self.sessions_run,
            self.revocations <= self.full_grants,
            self.false_revocations <= self.revocations,
            self.basic_grants <= self.sessions_run,
        ]
        if not all(checks):
            raise EvaluationError("inconsistent simulation tallies")


def _combine(tallies: Sequence[_Tally], seed: int) -> SimulationReport:
    sessions = sum(t.sessions for t in tallies)
    adversaries = sum(t.adversaries for t in tallies)
    full_grants = sum(t.full_grants for t in tallies)
    total_time = math.fsum(t.full_time_sum for t in tallies)
    latency: Counter = Counter()
    firings: Counter = Counter()
    for t in tallies:
        latency.update(t.latencies)
        firings.update(t.firings)
    nested: dict[str, dict[str, int]] = {}
    for (phase, fid), count in firings.items():
        nested.setdefault(phase, {})[fid] = count
    return SimulationReport(
        sessions_run=sessions,
        adversary_sessions=adversaries,
        legitimate_sessions=sessions - adversaries,
        false_grants=sum(t.false_grants for t in tallies),
        false_denials=sum(t.false_denials for t in tallies),
        basic_grants=sum(t.basic_grants for t in tallies),
        full_grants=full_grants,
        revocations=sum(t.revocations for t in tallies),
        false_revocations=sum(t.false_revocations for t in tallies),
        mean_time_to_full_grant=total_time / full_grants if full_grants else None,
        revocation_latency_distribution=dict(latency),
        factor_firings=nested,
        seed=seed,
    )


_SHARD = 1 << 16


def run_simulation(
    scenario: Scenario,
    catalog: Sequence[Factor],
    policy: Policy,
    trials: int,
    seed: int,
    *,
    workers: int = 1,
    engine: str = "auto",
) -> SimulationReport:
    """Simulate `trials` sessions and aggregate. Deterministic for a given
    seed at any worker count; both engines produce identical reports."""
    if trials < 1:
        raise ConfigError("trials must be at least 1", field="trials")
    problems = validate_scenario(scenario, catalog, policy)
    if problems:
        raise ConfigError("scenario invalid: " + "; ".join(problems))
    machine, plan = _build_plan(scenario, catalog, policy)
    if engine == "auto":
        engine = "vector" if plan.vector_ok else "machine"
    if engine not in ("vector", "machine"):
        raise ConfigError(f"engine must be auto, vector, or machine, got {engine!r}", field="engine")
    if engine == "vector" and not plan.vector_ok:
        raise ConfigError("this scenario needs the machine engine (context changes or stale evidence)", field="engine")

    index = {f.id: f for f in catalog}
    full, rem = divmod(trials, _SHARD)
    sizes = [_SHARD] * full + ([rem] if rem else [])
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def run_shard(s: int) -> _Tally:
        adversary, passes, fails = _sample_shard(children[s], sizes[s], plan, scenario, index)
        if engine == "vector":
            return _vector_tally(plan, adversary, passes, fails)
        return _machine_tally(plan, scenario, machine, adversary, passes, fails)

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tallies = list(pool.map(run_shard, range(len(sizes))))
    else:
        tallies = [run_shard(s) for s in range(len(sizes))]
    return _combine(tallies, seed)


@dataclass(frozen=True)
class GrantTiming:
    """Elapsed-time summary for Basic and Full grants.

    over_budget flags a median active-phase duration above the usability
    budget; degenerate flags a run that produced no Full grant at all.
    """

    trials: int
    basic_grants: int
    full_grants: int
    median_time_to_basic: float | None
    median_time_to_full: float | None
    median_active_phase: float | None
    usability_budget: float
    over_budget: bool
    degenerate: bool


def time_to_grant(
    scenario: Scenario,
    catalog: Sequence[Factor],
    policy: Policy,
    *,
    trials: int = 2000,
    seed: int = 0,
) -> GrantTiming:
    """Run machine-driven trials and summarize grant timing."""
    if trials < 1:
        raise ConfigError("trials must be at least 1", field="trials")
    problems = validate_scenario(scenario, catalog, policy)
    if problems:
        raise ConfigError("scenario invalid: " + "; ".join(problems))
    machine, plan = _build_plan(scenario, catalog, policy)
    index = {f.id: f for f in catalog}
    times: list[tuple[float | None, float | None, bool]] = []
    children = np.random.SeedSequence(seed).spawn(1)
    adversary, passes, fails = _sample_shard(children[0], trials, plan, scenario, index)
    _machine_tally(plan, scenario, machine, adversary, passes, fails, collect_times=times)

    basics = [b for b, _, _ in times if b is not None]
    fulls = [f for _, f, _ in times if f is not None]
    actives = [f - plan.pre_end for f in fulls]
    budget = scenario.config.usability_budget
    median_active = statistics.median(actives) if actives else None
    return GrantTiming(
        trials=trials,
        basic_grants=len(basics),
        full_grants=len(fulls),
        median_time_to_basic=statistics.median(basics) if basics else None,
        median_time_to_full=statistics.median(fulls) if fulls else None,
        median_active_phase=median_active,
        usability_budget=budget,
        over_budget=median_active is not None and median_active > budget,
        degenerate=not fulls,
    )


def _fmt17(value: float) -> str:
    return "%.17g" % value


def report_to_csv(report: SimulationReport) -> str:
    """Flatten a report into metric,value rows; stable order, 17
    significant digits, so equal reports render byte-identically."""
    rows = [
        ("sessions_run", str(report.sessions_run)),
        ("adversary_sessions", str(report.adversary_sessions)),
        ("legitimate_sessions", str(report.legitimate_sessions)),
        ("false_grants", str(report.false_grants)),
        ("false_denials", str(report.false_denials)),
        ("basic_grants", str(report.basic_grants)),
        ("full_grants", str(report.full_grants)),
        ("revocations", str(report.revocations)),
        ("false_revocations", str(report.false_revocations)),
        (
            "mean_time_to_full_grant",
            "" if report.mean_time_to_full_grant is None else _fmt17(report.mean_time_to_full_grant),
        ),
        ("seed", str(report.seed)),
    ]
    for latency, count in report.revocation_latency_distribution.items():
        rows.append((f"revocation_latency[{_fmt17(latency)}]", str(count)))
    for phase, counts in report.factor_firings.items():
        for fid, count in counts.items():
            rows.append((f"firings[{phase}][{fid}]", str(count)))
    return "metric,value\n" + "\n".join(f"{k},{v}" for k, v in rows) + "\n"


def report_summary(report: SimulationReport) -> str:
    lines = [
        f"sessions: {report.sessions_run} "
        f"({report.adversary_sessions} adversary, {report.legitimate_sessions} legitimate)",
        f"grants: {report.full_grants} full, {report.basic_grants} basic",
        f"false grants: {report.false_grants}; false denials: {report.false_denials}",
        f"revocations: {report.revocations} ({report.false_revocations} false alarms)",
    ]
    if report.mean_time_to_full_grant is not None:
        lines.append(f"mean time to full grant: {report.mean_time_to_full_grant:.3f} s")
    if report.revocation_latency_distribution:
        parts = ", ".join(
            f"{latency:g}s: {count}" for latency, count in report.revocation_latency_distribution.items()
        )
        lines.append(f"revocation latency: {parts}")
    return "\n".join(lines) + "\n"
