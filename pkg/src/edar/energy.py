"""Analytical energy model for splitting the pipeline between sensor and processor.

Units: one unit is the energy of one FLOP at 7 nm. A FLOP at node ``n`` costs
``(n / 7) ** 2`` units and moving one byte across the sensor link costs
``tx_ratio`` units.

Dataflow per frame (bytes on each edge):

    image   -> EvMapGen        full image
    image   -> PredNet         full image (it crops the ROI out of it)
    EvMapGen -> PredNet        event map
    EdMapGen -> PredNet        edge map
    PredNet -> SegNet          ROI image, averaged over extrapolated frames
    SegNet  -> EdMapGen        segmentation map
    SegNet  -> host            segmentation map (gaze estimation runs on the processor)

The image originates on the sensor. A producer's output crosses the link at
most once per direction however many consumers sit on the other side.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

SENSOR = "sensor"
PROCESSOR = "processor"
COMPONENTS = ("EvMapGen", "EdMapGen", "PredNet", "SegNet")
KB = 1024
REFERENCE_NODE = 7.0


@dataclass(frozen=True)
class ComponentCost:
    name: str
    flops: float
    output_bytes: float

    def __post_init__(self):
        if self.name not in COMPONENTS:
            raise ValueError(f"unknown component {self.name!r}")
        if self.flops < 0 or self.output_bytes < 0:
            raise ValueError("costs must be non-negative")


# 640x400 input: 1 byte per image pixel, 1 bit per pixel of the half-size event
# and edge maps, 2 bits per segmentation pixel. The prediction network's own
# output is the ROI image, derived from the scenario fractions instead.
IMAGE_BYTES = 250 * KB
DEFAULT_COSTS = {
    "EvMapGen": ComponentCost("EvMapGen", 0.3e6, 7.8125 * KB),
    "EdMapGen": ComponentCost("EdMapGen", 1.9e6, 7.8125 * KB),
    "PredNet": ComponentCost("PredNet", 55.4e6, 41.7 * KB),
    "SegNet": ComponentCost("SegNet", 2641.6e6, 62.5 * KB),
}

MODE_PLACEMENTS = {
    "a": {"EvMapGen": PROCESSOR, "EdMapGen": PROCESSOR, "PredNet": PROCESSOR, "SegNet": PROCESSOR},
    "b": {"EvMapGen": SENSOR, "EdMapGen": SENSOR, "PredNet": SENSOR, "SegNet": PROCESSOR},
    "c": {"EvMapGen": SENSOR, "EdMapGen": PROCESSOR, "PredNet": SENSOR, "SegNet": PROCESSOR},
}


@dataclass
class MappingScenario:
    placement: dict = field(default_factory=lambda: dict(MODE_PLACEMENTS["a"]))
    sensor_node: float = 7.0
    processor_node: float = 7.0
    roi_fraction: float = 1 / 3
    extrapolated_fraction: float = 0.5
    tx_ratio: float = 800.0
    fullres_fraction: float = 0.0  # frames falling back to full resolution
    image_bytes: float = IMAGE_BYTES

    def validate(self):
        missing = set(COMPONENTS) - set(self.placement)
        extra = set(self.placement) - set(COMPONENTS)
        if missing or extra:
            raise ValueError(f"placement must cover exactly {COMPONENTS}; missing {sorted(missing)}, "
                             f"unknown {sorted(extra)}")
        bad = {k: v for k, v in self.placement.items() if v not in (SENSOR, PROCESSOR)}
        if bad:
            raise ValueError(f"placements must be {SENSOR!r} or {PROCESSOR!r}: {bad}")
        for name in ("roi_fraction", "extrapolated_fraction", "fullres_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.extrapolated_fraction + self.fullres_fraction > 1:
            raise ValueError("extrapolated and full-resolution fractions exceed 1 together")
        if not (self.sensor_node > 0 and self.processor_node > 0):
            raise ValueError("process nodes must be positive")
        if self.tx_ratio < 0 or self.image_bytes < 0:
            raise ValueError("tx_ratio and image_bytes must be non-negative")

    def roi_stream_bytes(self) -> float:
        """Average bytes per frame from the prediction network to the segmentation network."""
        return (self.image_bytes * self.roi_fraction * (1 - self.extrapolated_fraction - self.fullres_fraction)
                + self.image_bytes * self.fullres_fraction)

    def sensor_components(self) -> list[str]:
        return [c for c in COMPONENTS if self.placement[c] == SENSOR]


@dataclass(frozen=True)
class EnergyBreakdown:
    compute_energy: float
    transmission_energy: float
    total: float
    sensor_to_processor_bytes: float
    processor_to_sensor_bytes: float
    sensor_flops: float
    processor_flops: float

    def to_dict(self) -> dict:
        return asdict(self)


def node_scale(node: float) -> float:
    return (node / REFERENCE_NODE) ** 2


def _edges(scenario: MappingScenario, costs: dict):
    """(producer, consumer, bytes) for every dataflow edge; 'image' and 'host' are fixed ends."""
    return [
        ("image", "EvMapGen", scenario.image_bytes),
        ("image", "PredNet", scenario.image_bytes),
        ("EvMapGen", "PredNet", costs["EvMapGen"].output_bytes),
        ("EdMapGen", "PredNet", costs["EdMapGen"].output_bytes),
        ("PredNet", "SegNet", scenario.roi_stream_bytes()),
        ("SegNet", "EdMapGen", costs["SegNet"].output_bytes),
        ("SegNet", "host", costs["SegNet"].output_bytes),
    ]


def scenario_energy(scenario: MappingScenario, costs: dict | None = None) -> EnergyBreakdown:
    costs = DEFAULT_COSTS if costs is None else costs
    scenario.validate()
    if set(costs) != set(COMPONENTS):
        raise ValueError(f"costs must cover exactly {COMPONENTS}")
    where = dict(scenario.placement, image=SENSOR, host=PROCESSOR)
    sent: dict[tuple[str, str], float] = {}
    for src, dst, nbytes in _edges(scenario, costs):
        if where[src] != where[dst]:
            key = (src, where[dst])
            sent[key] = max(sent.get(key, 0.0), nbytes)
    up = sum(v for (_, d), v in sent.items() if d == PROCESSOR)
    down = sum(v for (_, d), v in sent.items() if d == SENSOR)
    sflops = sum(costs[c].flops for c in COMPONENTS if where[c] == SENSOR)
    pflops = sum(costs[c].flops for c in COMPONENTS if where[c] == PROCESSOR)
    compute = sflops * node_scale(scenario.sensor_node) + pflops * node_scale(scenario.processor_node)
    transmission = (up + down) * scenario.tx_ratio
    return EnergyBreakdown(compute, transmission, compute + transmission, up, down, sflops, pflops)


def mode_scenario(mode: str, **kwargs) -> MappingScenario:
    if mode not in MODE_PLACEMENTS:
        raise ValueError(f"unknown mode {mode!r}; expected one of {sorted(MODE_PLACEMENTS)}")
    return MappingScenario(placement=dict(MODE_PLACEMENTS[mode]), **kwargs)


def all_placements():
    for sides in itertools.product((PROCESSOR, SENSOR), repeat=len(COMPONENTS)):
        yield dict(zip(COMPONENTS, sides))


def optimal_mapping(costs: dict | None = None, sensor_node: float = 7.0, processor_node: float = 7.0,
                    **fractions) -> MappingScenario:
    """Cheapest of the 16 placements; ties go to the one with fewer sensor components."""
    best = None
    best_key = None
    for placement in all_placements():
        s = MappingScenario(placement=placement, sensor_node=sensor_node, processor_node=processor_node,
                            **fractions)
        key = (scenario_energy(s, costs).total, len(s.sensor_components()))
        if best_key is None or key < best_key:
            best, best_key = s, key
    return best


def mode_of(placement: dict) -> str | None:
    for name, p in MODE_PLACEMENTS.items():
        if p == placement:
            return name
    return None
