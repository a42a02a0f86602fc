"""Eager module declaration with deferred execution.

Calling a module registers an invocation in its :class:`Instance` and
returns an empty :class:`DataHandle`. :func:`run` extracts the network
topology from the invocations, executes it on the emulator (or numerically
for mock-mode modules), converts the observables to tensors, passes them
through each module's ``post_process`` and fills the handles. Handle
tensors are connected to the gradient tape, so a loss built from them
backpropagates into module parameters.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Sequence, Union

import networkx as nx
import numpy as np

from .autodiff import (Tensor, TimeTensor, as_tensor, get_dtype, matmul_time,
                       time_shift)
from .emulator import (Emulator, HardwareProfile, MembraneSamples, NeuronParams,
                       PopulationRecord, SpikeTrain, simulate)
from .errors import GraphError, PlacementError, UsageError
from .profiling import section
from .training import LIFFunction, LIFunction, dropout_mask
from .transforms import (TimeGrid, interpolate_membrane, normalize_membrane,
                         quantize_ste, spikes_to_dense, weight_to_hardware)

log = logging.getLogger(__name__)

_instance_ids = itertools.count()


class DataHandle:
    """Promise of the observables of one module; empty until the run."""

    FIELDS = ("spikes", "membrane", "membrane_cadc", "current")

    def __init__(self, producer: Optional["Invocation"] = None) -> None:
        self.producer = producer
        self.clear()

    def clear(self) -> None:
        self.spikes: Optional[TimeTensor] = None
        self.membrane: Optional[TimeTensor] = None
        self.membrane_cadc: Optional[MembraneSamples] = None
        self.current: Optional[TimeTensor] = None

    @property
    def instance(self) -> Optional["Instance"]:
        return None if self.producer is None else self.producer.module.instance

    @property
    def payload(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in self.FIELDS
                if getattr(self, k) is not None}

    @property
    def filled(self) -> bool:
        return bool(self.payload)

    def __repr__(self) -> str:
        keys = ",".join(self.payload) or "empty"
        return f"{type(self).__name__}({keys})"


class InputHandle(DataHandle):
    """External spike source; usable from any instance.

    Accepts a :class:`SpikeTrain` (with batch size) or a dense
    ``[T, B, size]`` array of 0/1 spikes.
    """

    def __init__(self, size: int, name: str = "input") -> None:
        self.size = size
        self.name = name
        self.source: Union[SpikeTrain, np.ndarray, None] = None
        self.batch_size: Optional[int] = None
        super().__init__(None)

    def set(self, spikes: Union[SpikeTrain, np.ndarray, Tensor],
            batch_size: Optional[int] = None) -> None:
        if isinstance(spikes, SpikeTrain):
            if batch_size is None:
                raise UsageError("batch_size is required for sparse input")
            self.source, self.batch_size = spikes, batch_size
        else:
            dense = np.asarray(getattr(spikes, "data", spikes))
            if dense.ndim != 3 or dense.shape[2] != self.size:
                raise UsageError(f"dense input must be [T, B, {self.size}], "
                                 f"got {dense.shape}")
            self.source, self.batch_size = dense, dense.shape[1]

    def dense(self, grid: TimeGrid) -> TimeTensor:
        if self.source is None:
            raise UsageError(f"input handle {self.name!r} has no data")
        if isinstance(self.source, SpikeTrain):
            return spikes_to_dense(self.source, grid, (self.batch_size, self.size))
        if self.source.shape[0] != grid.steps:
            raise UsageError(f"dense input has {self.source.shape[0]} steps, "
                             f"grid has {grid.steps}")
        return TimeTensor(self.source)


@dataclass
class Invocation:
    module: "Module"
    inputs: tuple[DataHandle, ...]
    output: DataHandle
    index: int


@dataclass
class Observables:
    """Post-processed observables of a population as dense arrays.

    ``provenance`` is ``"injected"`` for data read back from the emulator and
    ``"simulated"`` for jointly simulated mock cycles.
    """

    spikes: Optional[np.ndarray] = None
    membrane: Optional[np.ndarray] = None
    membrane_cadc: Optional[MembraneSamples] = None
    provenance: str = "injected"


class Module:
    """Network entity bound to one instance at construction."""

    kind = "module"

    def __init__(self, instance: "Instance", size: int, name: Optional[str] = None,
                 post_process: Optional[Callable] = None, record: bool = True) -> None:
        self.size = size
        self.record = record
        self.mock = False
        self.training = True
        if post_process is not None:
            self.post_process = post_process
        self.instance = instance
        self.name = instance._bind(self, name)

    def __call__(self, *inputs: DataHandle) -> DataHandle:
        return self.instance.register(self, inputs)

    def parameters(self) -> dict[str, Tensor]:
        return {}

    def load_parameters(self, params: dict[str, Tensor]) -> None:
        for key, value in params.items():
            setattr(self, key, value)

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        return self

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name}, size={self.size})"


class Synapse(Module):
    """Projection ``in_features -> out_features`` with float weights.

    On the emulator the weights are mapped to integer levels via
    ``weight_scale`` (levels per model unit); gradients pass the rounding
    unchanged.
    """

    kind = "synapse"

    def __init__(self, in_features: int, out_features: int, instance: "Instance",
                 weight: Any = None, weight_scale: float = 20.0,
                 name: Optional[str] = None, **kwargs) -> None:
        super().__init__(instance, out_features, name, **kwargs)
        self.in_features = in_features
        self.out_features = out_features
        self.weight_scale = float(weight_scale)
        if weight is None:
            weight = np.zeros((in_features, out_features))
        self.weight = Tensor(weight, requires_grad=True)
        if self.weight.shape != (in_features, out_features):
            raise UsageError(f"weight shape {self.weight.shape} does not match "
                             f"({in_features}, {out_features})")

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight}

    def hardware_weights(self) -> tuple[np.ndarray, float]:
        profile = self.instance.profile
        if not profile.quantize:
            return self.weight.data, 1.0
        hw, saturated = weight_to_hardware(self.weight.data, self.weight_scale,
                                           profile.weight_max)
        if saturated:
            log.debug("%s: %d weights saturated", self.name, saturated)
        return hw, 1.0 / self.weight_scale

    def effective_weight(self, emulated: bool) -> Tensor:
        if emulated and self.instance.profile.quantize:
            return quantize_ste(self.weight, self.weight_scale,
                                self.instance.profile.weight_max)
        return self.weight

    def post_process(self, current: TimeTensor) -> TimeTensor:
        return current


class Neuron(Module):
    """Population base; ``post_process`` maps raw records to observables."""

    spiking = True

    def __init__(self, size: int, instance: "Instance",
                 params: Optional[NeuronParams] = None, beta: float = 10.0,
                 trace_offset: Optional[float] = None,
                 trace_scale: Optional[float] = None,
                 name: Optional[str] = None, **kwargs) -> None:
        super().__init__(instance, size, name, **kwargs)
        self.params = params or NeuronParams()
        self.beta = beta
        self.trace_offset = trace_offset
        self.trace_scale = trace_scale

    def post_process(self, record: PopulationRecord, grid: TimeGrid,
                     batch: int) -> Observables:
        """Dense spikes and the interpolated, normalized membrane."""
        profile = self.instance.profile
        offset = profile.adc_offset if self.trace_offset is None else self.trace_offset
        scale = profile.adc_scale if self.trace_scale is None else self.trace_scale
        spikes = None
        if self.spiking:
            spikes = spikes_to_dense(record.spikes, grid, (batch, self.size)).data
        dense = interpolate_membrane(record.membrane, grid, (batch, self.size))
        membrane = normalize_membrane(dense, offset, scale).data
        return Observables(spikes, membrane, record.membrane)


class LIF(Neuron):
    kind = "lif"

    def func(self, current: Tensor, observables: Optional[Observables], dt: float,
             gate: Optional[np.ndarray]) -> tuple[Tensor, Tensor]:
        injected = () if observables is None else (observables.spikes,
                                                   observables.membrane)
        return LIFFunction.apply(current, injected=injected, params=self.params,
                                 dt=dt, beta=self.beta, spike_gate=gate)


class LI(Neuron):
    kind = "li"
    spiking = False

    def func(self, current: Tensor, observables: Optional[Observables], dt: float,
             gate: Optional[np.ndarray]) -> tuple[Tensor]:
        injected = () if observables is None else (observables.membrane,)
        return (LIFunction.apply(current, injected=injected, params=self.params,
                                 dt=dt),)


class Dropout(Module):
    """Batch-wise spike mask applied to the preceding LIF population.

    The mask is drawn once per run and held for all time steps; on the
    emulator it disables the population's spike output.
    """

    kind = "dropout"

    def __init__(self, size: int, instance: "Instance", p: float = 0.0,
                 seed: int = 0, name: Optional[str] = None, **kwargs) -> None:
        super().__init__(instance, size, name, **kwargs)
        dropout_mask((1, 1), p)  # validates p
        self.p = p
        self.rng = np.random.default_rng(seed)

    def draw_mask(self, batch: int) -> Optional[np.ndarray]:
        if not self.training or self.p == 0:
            return None
        return dropout_mask((batch, self.size), self.p, self.rng)


@dataclass
class GraphNode:
    id: str
    kind: str
    size: Union[int, tuple[int, int]]
    entity: Any
    order: int
    taps: tuple[str, ...] = ()
    cycle: bool = False


@dataclass
class GraphEdge:
    src: str
    dst: str
    recurrent: bool = False


@dataclass
class ExecutionGraph:
    """Network entities and event-flow edges extracted from an instance."""

    nodes: dict[str, GraphNode]
    edges: list[GraphEdge]
    handle_nodes: dict[int, str]
    units: list[list[str]] = field(default_factory=list)

    def predecessors(self, node: str) -> list[GraphEdge]:
        return [e for e in self.edges if e.dst == node]

    def successors(self, node: str) -> list[GraphEdge]:
        return [e for e in self.edges if e.src == node]

    def node_of(self, handle: DataHandle) -> GraphNode:
        return self.nodes[self.handle_nodes[id(handle)]]

    def digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from((e.src, e.dst) for e in self.edges)
        return g

    def cycles(self) -> list[list[str]]:
        return [u for u in self.units if len(u) > 1 or any(
            e.src == e.dst for e in self.edges if e.src == u[0])]

    @property
    def network_nodes(self) -> list[GraphNode]:
        """Nodes of network entities; external inputs are sources only."""
        return [n for n in self.nodes.values() if n.kind != "input"]

    @property
    def network_edges(self) -> list[GraphEdge]:
        return [e for e in self.edges if self.nodes[e.src].kind != "input"]

    def dump(self) -> str:
        """Deterministic text form: header, node lines, edge lines, input lines."""
        nodes, edges = self.network_nodes, self.network_edges
        lines = [f"graph nodes={len(nodes)} edges={len(edges)} "
                 f"cycles={len(self.cycles())}"]
        for node in nodes:
            size = (f"{node.size[0]}x{node.size[1]}" if isinstance(node.size, tuple)
                    else str(node.size))
            taps = ",".join(node.taps) or "-"
            cycle = "yes" if node.cycle else "no"
            lines.append(f"node {node.id} kind={node.kind} size={size} "
                         f"taps={taps} cycle={cycle}")
        for edge in edges:
            taps = _EDGE_PAYLOAD[self.nodes[edge.src].kind]
            rec = "yes" if edge.recurrent else "no"
            lines.append(f"edge {edge.src}->{edge.dst} taps={taps} recurrent={rec}")
        for node in self.nodes.values():
            if node.kind == "input":
                feeds = ",".join(e.dst for e in self.successors(node.id))
                lines.append(f"input {node.id} size={node.size} feeds={feeds}")
        return "\n".join(lines) + "\n"


_TAPS = {"input": ("spikes",), "synapse": ("current",),
         "lif": ("spikes", "membrane", "membrane_cadc"),
         "li": ("membrane", "membrane_cadc"), "dropout": ("spikes",)}
_EDGE_PAYLOAD = {"input": "spikes", "synapse": "current", "lif": "spikes",
                 "li": "membrane", "dropout": "spikes"}
_ALLOWED_SOURCES = {"synapse": {"input", "lif", "dropout"},
                    "lif": {"synapse"}, "li": {"synapse"}, "dropout": {"lif"}}


class Instance:
    """Registry of module invocations forming one experiment execution.

    :param backend: emulator executing non-mock populations; a default
        :class:`Emulator` is created when omitted.
    :param mock: run every module numerically, never touching the backend.
    """

    def __init__(self, backend: Optional[Emulator] = None, mock: bool = False,
                 name: Optional[str] = None) -> None:
        self.backend = backend if backend is not None else Emulator()
        self.mock = mock
        self.name = name or f"instance{next(_instance_ids)}"
        self.modules: list[Module] = []
        self.invocations: list[Invocation] = []
        self.runs = 0
        self.backend_calls = 0
        self.last_graph: Optional[ExecutionGraph] = None

    @property
    def profile(self) -> HardwareProfile:
        return self.backend.profile

    def _bind(self, module: Module, name: Optional[str]) -> str:
        if name is None:
            count = sum(1 for m in self.modules if m.kind == module.kind)
            name = f"{module.kind}{count}"
        if any(m.name == name for m in self.modules):
            raise UsageError(f"module name {name!r} already used in {self.name}")
        self.modules.append(module)
        return name

    def register(self, module: Module, inputs: Sequence[DataHandle]) -> DataHandle:
        if module.instance is not self:
            raise UsageError(f"{module.name} is bound to another instance")
        if len(inputs) != 1:
            raise UsageError(f"{module.name} takes exactly one input handle")
        for handle in inputs:
            if not isinstance(handle, DataHandle):
                raise UsageError(f"expected a DataHandle, got {type(handle).__name__}")
            if isinstance(handle, InputHandle):
                continue
            owner = handle.instance
            if owner is not None and owner is not self:
                raise UsageError(
                    f"handle produced in {owner.name} cannot feed {self.name}: "
                    "no inter-instance recurrence")
        out = DataHandle()
        inv = Invocation(module, tuple(inputs), out, len(self.invocations))
        out.producer = inv
        self.invocations.append(inv)
        return out

    def handles(self) -> list[DataHandle]:
        return [inv.output for inv in self.invocations]

    def effective_mock(self, module: Module) -> bool:
        return self.mock or module.mock

    def extract_topology(self) -> ExecutionGraph:
        return extract_topology(self)

    def run(self, duration: float = 60.0, dt: float = 0.5) -> None:
        run(self, duration, dt)


def extract_topology(instance: Instance, check_resources: bool = True
                     ) -> ExecutionGraph:
    """Build and validate the execution graph of the registered invocations."""
    with section("additional back-end overhead"):
        return _extract(instance, check_resources)


def _extract(instance: Instance, check_resources: bool) -> ExecutionGraph:
    if not instance.invocations:
        raise GraphError(f"{instance.name} has no registered invocations")
    # drop unrecorded invocations nobody consumes, until nothing changes
    live = list(instance.invocations)
    while True:
        consumed = {id(h) for inv in live for h in inv.inputs}
        kept = [inv for inv in live
                if inv.module.record or id(inv.output) in consumed]
        if len(kept) == len(live):
            break
        live = kept
    if not live:
        raise GraphError(f"{instance.name} records nothing")

    nodes: dict[str, GraphNode] = {}
    handle_nodes: dict[int, str] = {}
    edge_keys: dict[tuple[str, str], GraphEdge] = {}
    order = itertools.count()

    def add_node(node_id, kind, size, entity):
        if node_id not in nodes:
            nodes[node_id] = GraphNode(node_id, kind, size, entity, next(order),
                                       _TAPS[kind])
        return nodes[node_id]

    for inv in live:
        module = inv.module
        size = ((module.in_features, module.out_features)
                if isinstance(module, Synapse) else module.size)
        add_node(module.name, module.kind, size, module)
        handle_nodes[id(inv.output)] = module.name
    for inv in live:
        for handle in inv.inputs:
            if isinstance(handle, InputHandle):
                src = add_node(handle.name, "input", handle.size, handle)
                if src.entity is not handle:
                    raise GraphError(f"two input handles named {handle.name!r}")
                handle_nodes[id(handle)] = handle.name
            elif handle.producer is None or id(handle) not in handle_nodes:
                raise GraphError(f"{inv.module.name} consumes a handle that no "
                                 "invocation of this instance produces")
            src_id = handle_nodes[id(handle)]
            key = (src_id, inv.module.name)
            if key not in edge_keys:
                edge_keys[key] = GraphEdge(*key)

    edges = sorted(edge_keys.values(),
                   key=lambda e: (nodes[e.dst].order, nodes[e.src].order))
    graph = ExecutionGraph(nodes, edges, handle_nodes)
    _order_units(graph)
    _validate_kinds(graph)
    if check_resources:
        _check_resources(instance, graph)
    _check_mock_cover(instance, graph)
    return graph


def _validate_kinds(graph: ExecutionGraph) -> None:
    for node in graph.nodes.values():
        preds = graph.predecessors(node.id)
        allowed = _ALLOWED_SOURCES.get(node.kind, set())
        for edge in preds:
            src_kind = graph.nodes[edge.src].kind
            if src_kind not in allowed:
                raise GraphError(f"{node.kind} {node.id} cannot receive from "
                                 f"{src_kind} {edge.src}")
        if node.kind in ("synapse", "dropout") and len(preds) > 1:
            raise GraphError(f"{node.kind} {node.id} is invoked on "
                             f"{len(preds)} different sources")
        if node.kind == "synapse":
            (edge,) = preds
            src = graph.nodes[edge.src]
            width = src.size if isinstance(src.size, int) else src.size[1]
            if width != node.size[0]:
                raise GraphError(f"{node.id} expects {node.size[0]} inputs, "
                                 f"{edge.src} provides {width}")
        if node.kind in ("lif", "li", "dropout"):
            for edge in preds:
                src = graph.nodes[edge.src]
                width = src.size[1] if isinstance(src.size, tuple) else src.size
                if width != node.size:
                    raise GraphError(f"{node.id} has {node.size} units, "
                                     f"{edge.src} provides {width}")


def _order_units(graph: ExecutionGraph) -> None:
    g = graph.digraph()
    non_neuron = g.subgraph(n for n in g if graph.nodes[n].kind not in ("lif", "li"))
    if not nx.is_directed_acyclic_graph(non_neuron):
        cycle = nx.find_cycle(non_neuron)
        raise GraphError("cycle without a neuron population: "
                         + " -> ".join(e[0] for e in cycle))
    cond = nx.condensation(g)
    rank = {n: graph.nodes[n].order for n in g}
    units = []
    for c in nx.lexicographical_topological_sort(
            cond, key=lambda c: min(rank[n] for n in cond.nodes[c]["members"])):
        members = sorted(cond.nodes[c]["members"], key=rank.__getitem__)
        cyclic = len(members) > 1 or g.has_edge(members[0], members[0])
        if cyclic:
            neurons = [n for n in members if graph.nodes[n].kind in ("lif", "li")]
            if len(neurons) != 1:
                raise GraphError("cycles must pass through exactly one neuron "
                                 f"population, found {neurons}")
            (neuron,) = neurons
            for n in members:
                graph.nodes[n].cycle = True
            for edge in graph.edges:
                if edge.dst == neuron and edge.src in members:
                    edge.recurrent = True
            members = [neuron] + [n for n in members if n != neuron]
        units.append(members)
    graph.units = units


def _check_resources(instance: Instance, graph: ExecutionGraph) -> None:
    if instance.mock:
        return
    profile = instance.profile
    used = 0
    for node in graph.nodes.values():
        if node.kind not in ("lif", "li") or node.entity.mock:
            continue
        used += node.size
        fan_in = sum(graph.nodes[e.src].size[0] for e in graph.predecessors(node.id))
        if fan_in > profile.max_fan_in:
            _placement_violation(
                f"{node.id} receives {fan_in} synaptic inputs per neuron, "
                f"limit is {profile.max_fan_in}", profile)
    if used > profile.max_neurons:
        _placement_violation(f"network needs {used} neurons, chip provides "
                             f"{profile.max_neurons}", profile)


def _placement_violation(message: str, profile: HardwareProfile) -> None:
    if profile.strict:
        raise PlacementError(message)
    log.warning("placement limit exceeded (non-strict): %s", message)


def _target_neuron(graph: ExecutionGraph, synapse: str) -> Optional[GraphNode]:
    for edge in graph.successors(synapse):
        node = graph.nodes[edge.dst]
        if node.kind in ("lif", "li"):
            return node
    return None


def _check_mock_cover(instance: Instance, graph: ExecutionGraph) -> None:
    if instance.mock:
        return
    for unit in graph.units:
        if len(unit) > 1:
            flags = {graph.nodes[n].entity.mock for n in unit}
            if len(flags) > 1:
                raise UsageError("mock mode must cover the whole cyclic "
                                 f"sub-network {unit}")
    for node in graph.nodes.values():
        if node.kind == "synapse" and node.entity.mock:
            for edge in graph.successors(node.id):
                target = graph.nodes[edge.dst]
                if target.kind in ("lif", "li") and not target.entity.mock:
                    raise UsageError(f"{node.id} feeds emulated population "
                                     f"{target.id} and cannot be mocked alone")


def set_mock_mode(target: Union[Module, Instance], enabled: bool = True) -> None:
    """Execute ``target`` numerically instead of on the emulator.

    Setting a population also covers its afferent synapses. Partial cover of
    a cyclic sub-network is rejected.
    """
    if isinstance(target, Instance):
        target.mock = enabled
        return
    target.mock = enabled
    instance = target.instance
    if isinstance(target, Neuron):
        for inv in instance.invocations:
            if inv.module is target:
                for h in inv.inputs:
                    if h.producer is not None and isinstance(h.producer.module, Synapse):
                        h.producer.module.mock = enabled
    if instance.invocations:
        try:
            extract_topology(instance, check_resources=False)
        except UsageError:
            target.mock = not enabled
            raise


@dataclass
class _NodeResult:
    spikes: Optional[Tensor] = None     # host tensor (tape-connected)
    raw: Optional[np.ndarray] = None    # dense events as seen by the chip
    membrane: Optional[Tensor] = None
    current: Optional[Tensor] = None
    samples: Optional[MembraneSamples] = None


def run(instance: Instance, duration: float = 60.0, dt: float = 0.5) -> None:
    """Execute ``instance`` for ``ceil(duration / dt)`` steps and fill handles.

    Re-running overwrites the handles with fresh observables.
    """
    grid = TimeGrid(duration, dt)
    graph = extract_topology(instance)
    instance.last_graph = graph
    batch = _batch_size(instance, graph)
    with section("additional back-end overhead"):
        if not instance.mock:
            instance.backend.reset_placement()
        gates = {}
        for node in graph.nodes.values():
            if node.kind == "dropout":
                mask = node.entity.draw_mask(batch)
                (edge,) = graph.predecessors(node.id)
                gates[edge.src] = mask
    results: dict[str, _NodeResult] = {}
    for unit in graph.units:
        head = graph.nodes[unit[0]]
        if head.kind == "input":
            with section("data transform"):
                dense = head.entity.dense(grid)
            results[head.id] = _NodeResult(spikes=dense, raw=dense.data)
        elif head.kind in ("lif", "li"):
            _run_population(instance, graph, unit, grid, batch, gates, results)
        elif head.kind == "synapse":
            # sink synapse without a target population
            src = results[graph.predecessors(head.id)[0].src]
            current = matmul_time(src.spikes, head.entity.weight)
            results[head.id] = _NodeResult(current=head.entity.post_process(current))
        elif head.kind == "dropout":
            (edge,) = graph.predecessors(head.id)
            src = results[edge.src]
            mask = gates.get(edge.src)
            spikes = src.spikes if mask is None else src.spikes * mask[None]
            results[head.id] = _NodeResult(spikes=spikes, raw=src.raw)
    for inv in instance.invocations:
        handle = inv.output
        handle.clear()
        node_id = graph.handle_nodes.get(id(handle))
        if node_id is None:
            continue
        res = results[node_id]
        handle.spikes, handle.membrane = res.spikes, res.membrane
        handle.current, handle.membrane_cadc = res.current, res.samples
    instance.runs += 1


def _batch_size(instance: Instance, graph: ExecutionGraph) -> int:
    sizes = {n.entity.batch_size for n in graph.nodes.values() if n.kind == "input"}
    if None in sizes:
        raise UsageError("an input handle has no data")
    if len(sizes) != 1:
        raise UsageError(f"input handles disagree on batch size: {sorted(sizes)}")
    return sizes.pop()


def _run_population(instance: Instance, graph: ExecutionGraph, unit: list[str],
                    grid: TimeGrid, batch: int, gates: dict,
                    results: dict[str, _NodeResult]) -> None:
    node = graph.nodes[unit[0]]
    module: Neuron = node.entity
    mock = instance.effective_mock(module)
    gate = gates.get(node.id)
    afferent = [graph.nodes[e.src] for e in graph.predecessors(node.id)
                if not e.recurrent]
    recurrent = [graph.nodes[e.src] for e in graph.predecessors(node.id)
                 if e.recurrent]
    ff_sources = {s.id: results[graph.predecessors(s.id)[0].src] for s in afferent}

    observables = None
    if not mock:
        with section("additional back-end overhead"):
            inputs = []
            for syn in afferent:
                hw, lsb = syn.entity.hardware_weights()
                inputs.append((ff_sources[syn.id].raw, hw, lsb))
            rec = None
            if recurrent:
                parts = [s.entity.hardware_weights() for s in recurrent]
                rec = (sum(np.asarray(p[0], dtype=np.float64) * p[1] for p in parts), 1.0)
        record = instance.backend.run_population(
            node.id, inputs, module.params, grid.dt, size=module.size,
            spiking=module.spiking, recurrent=rec, spike_gate=gate,
            dtype=get_dtype())
        instance.backend_calls += 1
        with section("data transform"):
            observables = module.post_process(record, grid, batch)
    elif recurrent:
        with section("network emulation duration"):
            current = sum((matmul_time(ff_sources[s.id].raw, s.entity.weight.data).data
                           for s in afferent), np.zeros((grid.steps, batch, module.size),
                                                        dtype=get_dtype()))
            rec_w = sum(np.asarray(s.entity.weight.data) for s in recurrent)
            _, out, membrane = simulate(current, module.params, grid.dt,
                                        spiking=module.spiking, spike_gate=gate,
                                        recurrent_weights=rec_w)
        observables = Observables(out if module.spiking else None, membrane,
                                  provenance="simulated")

    currents = []
    for syn in afferent:
        weight = syn.entity.effective_weight(emulated=not mock)
        current = syn.entity.post_process(matmul_time(ff_sources[syn.id].spikes, weight))
        results[syn.id] = _NodeResult(current=current)
        currents.append(current)
    for syn in recurrent:
        # back-edges deliver spikes one step later
        weight = syn.entity.effective_weight(emulated=not mock)
        current = time_shift(matmul_time(observables.spikes, weight), 1)
        current = syn.entity.post_process(current)
        results[syn.id] = _NodeResult(current=current)
        currents.append(current)
    total = currents[0]
    for c in currents[1:]:
        total = total + c
    outputs = module.func(total, observables, grid.dt, gate)
    if module.spiking:
        spikes, membrane = outputs
        raw = observables.spikes if observables is not None else spikes.data
        results[node.id] = _NodeResult(spikes=spikes, raw=raw, membrane=membrane,
                                       samples=getattr(observables, "membrane_cadc", None))
    else:
        (membrane,) = outputs
        results[node.id] = _NodeResult(membrane=membrane,
                                       samples=getattr(observables, "membrane_cadc", None))
