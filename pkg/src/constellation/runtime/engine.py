"""The semantic runtime: compiles queries into tasks and executes them.

One engine runs per node. Sense firings route through the predictive
cache and the privacy mediator; actuations go straight to drivers (native
or gateway-mirror). Event tasks poll their trigger each evaluation tick
and are edge-triggered: the body runs only on a false-to-true transition.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import threading
from dataclasses import dataclass, field

from constellation.cache import CacheManager
from constellation.cql import ast as cql_ast
from constellation.cql import parse_query
from constellation.device import DeviceRegistry, DevSet, EmptySet
from constellation.privacy.policy import BLOCKED, PrivacyMediator

from .clock import Clock, SystemClock
from .task import (
    ACTIVE,
    CANCELLED,
    KIND_ACTUATE,
    KIND_EVENT,
    KIND_SENSE,
    OUTCOME_ACK,
    OUTCOME_ERROR,
    OUTCOME_VALUE,
    SERVED_CACHE,
    Task,
    TaskResult,
    DeviceOutcome,
)

logger = logging.getLogger(__name__)

DEFAULT_EVAL_TICK_MS = 1_000


class UnknownDevSet(Exception):
    """A SENSE/ACTUATE target is neither a bound alias nor a known devtype."""


class GatewayUnavailable(Exception):
    pass


@dataclass
class SubmitOutcome:
    """What a submitted statement produced."""

    kind: str                       # find | task | policy | import
    task: Task | None = None
    devset: DevSet | None = None
    imported: list[str] = field(default_factory=list)


class RuntimeEngine:
    def __init__(self, registry: DeviceRegistry, cache: CacheManager | None = None,
                 mediator: PrivacyMediator | None = None, clock: Clock | None = None,
                 result_sink=None):
        self.registry = registry
        self.cache = cache or CacheManager()
        self.mediator = mediator
        self.clock = clock or SystemClock()
        self.result_sink = result_sink   # callable(client_id, TaskResult)
        self.gateway_importer = None     # callable(url, token) -> list[device_id]
        self.tasks: dict[str, Task] = {}
        self.trace: list[str] = []
        self._aliases: dict[tuple[str, str], DevSet] = {}
        self._heap: list[tuple[int, int, str]] = []
        self._seq = itertools.count(1)
        self._lock = threading.RLock()

    # --- submission ---------------------------------------------------------

    def submit(self, query: str | cql_ast.QueryAst, client_id: str) -> SubmitOutcome:
        node = parse_query(query) if isinstance(query, str) else query
        body = node.body
        if isinstance(body, cql_ast.FindSpec):
            devset = self.resolve_target(body.devtype, body.where, client_id)
            self._aliases[(client_id, body.alias)] = devset
            return SubmitOutcome("find", devset=devset)
        if isinstance(body, cql_ast.DenatureSpec):
            if self.mediator is None:
                raise GatewayUnavailable("no privacy mediator on this node")
            self.mediator.set_policy(body.sensor_id, body.rules, issuer=client_id)
            return SubmitOutcome("policy")
        if isinstance(body, cql_ast.GatewayImportSpec):
            if self.gateway_importer is None:
                raise GatewayUnavailable("gateway bridge not configured on this node")
            imported = self.gateway_importer(body.url, body.token)
            return SubmitOutcome("import", imported=imported)
        task = self.compile(node, client_id)
        with self._lock:
            self.tasks[task.task_id] = task
            heapq.heappush(self._heap, (task.next_fire_ms, next(self._seq), task.task_id))
        return SubmitOutcome("task", task=task)

    def resolve_target(self, target: str, where, client_id: str) -> DevSet:
        """Resolve a devset name: bound alias first, then devtype lookup."""
        alias = self._aliases.get((client_id, target))
        if alias is not None and not where:
            return alias
        try:
            return self.registry.resolve_devset(target, where)
        except EmptySet:
            known = {m.devtype for m in self.registry.manifests()}
            if target not in known:
                raise UnknownDevSet(target) from None
            raise

    def compile(self, node: cql_ast.QueryAst, client_id: str) -> Task:
        body = node.body
        now = self.clock.now_ms()
        task_id = f"task-{next(self._seq)}"
        if isinstance(body, cql_ast.SenseSpec):
            devset = self.resolve_target(body.target, (), client_id)
            kind, period = KIND_SENSE, body.period or 0
        elif isinstance(body, cql_ast.ActuateSpec):
            devset = self.resolve_target(body.target, (), client_id)
            kind, period = KIND_ACTUATE, body.period or 0
        elif isinstance(body, cql_ast.EventSpec):
            # Condition targets resolve at each poll; periodic bodies fire
            # on the trigger period.
            devset = None
            kind = KIND_EVENT
            period = (body.trigger.period
                      if isinstance(body.trigger, cql_ast.Periodic) else 0)
        else:
            raise TypeError(f"cannot compile {type(body).__name__}")
        deadline = getattr(body, "deadline", None) or 0
        return Task(
            task_id=task_id,
            client_id=client_id,
            kind=kind,
            spec=body,
            devset=devset,
            period_ms=period,
            deadline_ms=deadline,
            start_ms=now,
            next_fire_ms=now,
        )

    # --- scheduling ----------------------------------------------------------

    def eval_tick_ms(self) -> int:
        periods = [t.period_ms for t in self.tasks.values()
                   if t.status == ACTIVE and t.period_ms > 0]
        return min([DEFAULT_EVAL_TICK_MS] + periods)

    def next_fire_ms(self) -> int | None:
        with self._lock:
            while self._heap:
                fire_at, _, task_id = self._heap[0]
                task = self.tasks.get(task_id)
                if task is None or task.status != ACTIVE or task.next_fire_ms != fire_at:
                    heapq.heappop(self._heap)
                    continue
                return fire_at
        return None

    def run_due(self) -> list[TaskResult]:
        """Fire every task due at the current clock time, in fire order."""
        now = self.clock.now_ms()
        results = []
        while True:
            with self._lock:
                due = self.next_fire_ms()
                if due is None or due > now:
                    break
                _, _, task_id = heapq.heappop(self._heap)
                task = self.tasks[task_id]
            result = self.fire(task, task.next_fire_ms)
            if result is not None:
                results.append(result)
                if self.result_sink is not None:
                    self.result_sink(task.client_id, result)
            with self._lock:
                if task.kind == KIND_EVENT and isinstance(task.spec.trigger, cql_ast.Condition):
                    task.schedule_next(eval_tick_ms=self.eval_tick_ms())
                else:
                    task.schedule_next()
                if task.status == ACTIVE:
                    heapq.heappush(self._heap,
                                   (task.next_fire_ms, next(self._seq), task.task_id))
        return results

    # --- firing ---------------------------------------------------------------

    def fire(self, task: Task, now: int) -> TaskResult | None:
        if task.status != ACTIVE or now < task.next_fire_ms:
            return None
        if task.kind == KIND_SENSE:
            result = self._fire_sense(task, now)
        elif task.kind == KIND_ACTUATE:
            result = self._fire_actuate(task, task.spec, now)
        else:
            result = self._fire_event(task, now)
        if result is not None:
            self._apply_deadline(task, result)
            for outcome in result.per_device:
                self._trace(now, task, outcome)
        return result

    def _apply_deadline(self, task: Task, result: TaskResult) -> None:
        if task.deadline_ms > 0 and result.per_device:
            worst = max(o.latency_ms for o in result.per_device)
            result.deadline_met = worst <= task.deadline_ms
        else:
            result.deadline_met = True

    def _fire_sense(self, task: Task, now: int) -> TaskResult:
        spec = task.spec
        selection = self.registry.select_device(task.devset, spec.cardinality)
        result = TaskResult(task.task_id, now, short_set=selection.short)
        for device_id in selection.device_ids:
            result.per_device.append(
                self.sense_one(device_id, spec, task.client_id, now))
        return result

    def sense_one(self, device_id: str, spec: cql_ast.SenseSpec,
                  client_id: str, now: int) -> DeviceOutcome:
        """Serve one device's SENSE through cache, then privacy mediation."""
        try:
            manifest = self.registry.manifest(device_id)
            decl = manifest.property_decl(spec.prop)
            if decl is None:
                return DeviceOutcome(device_id, OUTCOME_ERROR,
                                     f"no property {spec.prop!r}")
            state = self.cache.state_for(
                device_id, spec.prop, decl.datatype,
                model_name=manifest.cache_model or "Consistent",
                model_params=manifest.cache_params,
                delta=spec.delta, error_tolerance=spec.error,
            )
            latency_holder = {"ms": 0}

            def query_device():
                served = self.registry.sense(device_id, spec.prop, now)
                latency_holder["ms"] = served.latency_ms
                return served.value

            looked = state.lookup(now, query_device)
            served_by = (SERVED_CACHE if looked.served_by == SERVED_CACHE
                         else getattr(self.registry.driver(device_id), "served_tag", "Device"))
            outcome = DeviceOutcome(device_id, OUTCOME_VALUE, looked.value,
                                    served_by, latency_holder["ms"])
        except Exception as exc:
            return DeviceOutcome(device_id, OUTCOME_ERROR, str(exc))
        if self.mediator is not None:
            released = self.mediator.apply_policy(device_id, client_id, spec.prop,
                                                  outcome.value)
            if released == BLOCKED:
                return DeviceOutcome(device_id, OUTCOME_ERROR, None,
                                     outcome.served_by, outcome.latency_ms)
            outcome.value = released.value
        return outcome

    def _fire_actuate(self, task: Task, spec: cql_ast.ActuateSpec,
                      now: int, devset: DevSet | None = None) -> TaskResult:
        devset = devset or task.devset
        selection = self.registry.select_device(devset, spec.cardinality)
        result = TaskResult(task.task_id, now, short_set=selection.short)
        for device_id in selection.device_ids:
            try:
                served = self.registry.actuate(device_id, spec.action,
                                               dict(spec.params), now)
                tag = getattr(self.registry.driver(device_id), "served_tag", "Device")
                result.per_device.append(
                    DeviceOutcome(device_id, OUTCOME_ACK, None, tag, served.latency_ms))
            except Exception as exc:
                result.per_device.append(
                    DeviceOutcome(device_id, OUTCOME_ERROR, str(exc)))
        return result

    def _fire_event(self, task: Task, now: int) -> TaskResult | None:
        spec = task.spec
        trigger = spec.trigger
        if isinstance(trigger, cql_ast.Periodic):
            return self._fire_actuate(task, spec.body, now,
                                      devset=self._event_body_devset(task, spec))
        try:
            devset = self.resolve_target(trigger.target, (), task.client_id)
            selection = self.registry.select_device(devset, 1)
            if not selection.device_ids:
                return None
            served = self.registry.sense(selection.device_ids[0], trigger.prop, now)
        except Exception as exc:
            logger.debug("event %s trigger evaluation failed: %s", spec.name, exc)
            return None
        holds = _compare(float(served.value), trigger.comparator, trigger.threshold)
        fired, task.last_condition = (holds and not task.last_condition), holds
        if not fired:
            return None
        return self._fire_actuate(task, spec.body, now,
                                  devset=self._event_body_devset(task, spec))

    def _event_body_devset(self, task: Task, spec: cql_ast.EventSpec) -> DevSet:
        return self.resolve_target(spec.body.target, (), task.client_id)

    def execute_direct(self, body, client_id: str, device_ids: list[str]) -> TaskResult:
        """One-shot execution on explicit devices (forwarded cluster queries)."""
        now = self.clock.now_ms()
        result = TaskResult(f"fwd-{next(self._seq)}", now)
        if isinstance(body, cql_ast.SenseSpec):
            for device_id in device_ids:
                result.per_device.append(self.sense_one(device_id, body, client_id, now))
        elif isinstance(body, cql_ast.ActuateSpec):
            for device_id in device_ids:
                try:
                    served = self.registry.actuate(device_id, body.action,
                                                   dict(body.params), now)
                    tag = getattr(self.registry.driver(device_id), "served_tag", "Device")
                    result.per_device.append(
                        DeviceOutcome(device_id, OUTCOME_ACK, None, tag, served.latency_ms))
                except Exception as exc:
                    result.per_device.append(
                        DeviceOutcome(device_id, OUTCOME_ERROR, str(exc)))
        else:
            raise TypeError(f"cannot execute {type(body).__name__} directly")
        deadline = getattr(body, "deadline", None) or 0
        if deadline > 0 and result.per_device:
            result.deadline_met = max(o.latency_ms for o in result.per_device) <= deadline
        return result

    # --- cancellation and introspection ---------------------------------------

    def cancel_client(self, client_id: str) -> int:
        with self._lock:
            count = 0
            for task in self.tasks.values():
                if task.client_id == client_id and task.status == ACTIVE:
                    task.status = CANCELLED
                    count += 1
            return count

    def cancel_task(self, task_id: str, client_id: str | None = None) -> bool:
        with self._lock:
            task = self.tasks.get(task_id)
            if task is None or task.status != ACTIVE:
                return False
            if client_id is not None and task.client_id != client_id:
                return False
            task.status = CANCELLED
            return True

    def tasks_for(self, client_id: str) -> list[Task]:
        return [t for t in self.tasks.values() if t.client_id == client_id]

    def _trace(self, ts: int, task: Task, outcome: DeviceOutcome) -> None:
        self.trace.append(
            f"{ts}\t{task.task_id}\t{task.kind}\t{outcome.device_id}"
            f"\t{outcome.served_by}\t{outcome.latency_ms}\t{outcome.kind}"
        )


def _compare(value: float, comparator: str, threshold: float) -> bool:
    if comparator == "<":
        return value < threshold
    if comparator == ">":
        return value > threshold
    if comparator == "<=":
        return value <= threshold
    if comparator == ">=":
        return value >= threshold
    return value == threshold
