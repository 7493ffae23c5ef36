"""Leaky integrate-and-fire controllers, one tiny network per actuator.

Each network has two inputs (the actuator's corner distances), two hidden
spiking neurons and one spiking output neuron, so it is described by nine
numbers. A genome concatenates those nine numbers for every actuator in
actuator order.
"""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .softbody import ACTION_MAX, ACTION_MIN

PARAMS_PER_NET = 9
DEFAULT_DECAY = 0.1
DEFAULT_WINDOW = 10


class GenomeError(ValueError):
    pass


class OutputMode(Enum):
    BINARY = "binary"
    DUTY_CYCLE = "duty-cycle"


class SpikyNode:
    """A single LIF neuron whose threshold is its bias."""

    __slots__ = ("weights", "bias", "decay", "potential", "fire_log")

    def __init__(self, weights, bias, decay=DEFAULT_DECAY, window=DEFAULT_WINDOW):
        self.weights = [float(w) for w in weights]
        self.bias = float(bias)
        self.decay = float(decay)
        self.potential = 0.0
        self.fire_log = deque([0] * window, maxlen=window)

    def compute(self, inputs) -> float:
        if len(inputs) != len(self.weights):
            raise ValueError(f"expected {len(self.weights)} inputs, got {len(inputs)}")
        drive = 0.0
        for w, x in zip(self.weights, inputs):
            drive += w * x
        self.potential = (1.0 - self.decay) * self.potential + drive
        # >= so that an all-zero node fires on every tick
        if self.potential >= self.bias:
            self.potential = 0.0
            self.fire_log.append(1)
            return 1.0
        self.fire_log.append(0)
        return 0.0

    def duty_cycle(self) -> float:
        return sum(self.fire_log) / len(self.fire_log)

    def reset(self) -> None:
        self.potential = 0.0
        window = self.fire_log.maxlen
        self.fire_log.clear()
        self.fire_log.extend([0] * window)


def node_compute(node: SpikyNode, inputs) -> float:
    return node.compute(inputs)


def duty_cycle(node: SpikyNode) -> float:
    return node.duty_cycle()


@dataclass(frozen=True)
class NetParams:
    hidden_weights: tuple[tuple[float, float], tuple[float, float]]
    hidden_bias: tuple[float, float]
    output_weights: tuple[float, float]
    output_bias: float

    def flat(self) -> list[float]:
        (a, b), (c, d) = self.hidden_weights
        h0, h1 = self.hidden_bias
        o0, o1 = self.output_weights
        return [a, b, h0, c, d, h1, o0, o1, self.output_bias]

    @classmethod
    def from_flat(cls, v) -> NetParams:
        v = [float(x) for x in v]
        return cls(
            hidden_weights=((v[0], v[1]), (v[3], v[4])),
            hidden_bias=(v[2], v[5]),
            output_weights=(v[6], v[7]),
            output_bias=v[8],
        )


class SpikyNet:
    def __init__(self, params: NetParams, decay=DEFAULT_DECAY, window=DEFAULT_WINDOW):
        self.params = params
        self.hidden = [
            SpikyNode(params.hidden_weights[k], params.hidden_bias[k], decay, window) for k in range(2)
        ]
        self.output = SpikyNode(params.output_weights, params.output_bias, decay, window)

    def compute(self, inputs, mode: OutputMode = OutputMode.BINARY) -> float:
        if len(inputs) != 2:
            raise ValueError("a SpikyNet takes exactly two inputs")
        spikes = [node.compute(inputs) for node in self.hidden]
        fired = self.output.compute(spikes)
        if mode is OutputMode.BINARY:
            return ACTION_MAX if fired else ACTION_MIN
        return ACTION_MIN + self.output.duty_cycle()

    def reset(self) -> None:
        for node in self.hidden:
            node.reset()
        self.output.reset()

    @property
    def n_params(self) -> int:
        return sum(len(n.weights) + 1 for n in (*self.hidden, self.output))


def net_compute(net: SpikyNet, inputs, mode: OutputMode = OutputMode.BINARY) -> float:
    return net.compute(inputs, mode)


def genome_decode(genome, actuator_count: int) -> list[NetParams]:
    g = np.asarray(genome, dtype=float).ravel()
    if len(g) != PARAMS_PER_NET * actuator_count:
        raise GenomeError(
            f"genome of length {len(g)} does not fit {actuator_count} actuators "
            f"({PARAMS_PER_NET * actuator_count} values expected)"
        )
    return [NetParams.from_flat(chunk) for chunk in g.reshape(actuator_count, PARAMS_PER_NET)]


def genome_encode(params: list[NetParams]) -> np.ndarray:
    return np.array([x for p in params for x in p.flat()], dtype=float)


class SNNController:
    """One :class:`SpikyNet` per actuator, stepped together once per control tick."""

    def __init__(self, nets: list[SpikyNet], output_mode: OutputMode = OutputMode.BINARY):
        self.nets = nets
        self.output_mode = output_mode

    @classmethod
    def from_genome(
        cls,
        genome,
        actuator_count: int,
        output_mode: OutputMode = OutputMode.BINARY,
        decay: float = DEFAULT_DECAY,
        window: int = DEFAULT_WINDOW,
    ) -> SNNController:
        nets = [SpikyNet(p, decay, window) for p in genome_decode(genome, actuator_count)]
        return cls(nets, output_mode)

    def step(self, telemetry) -> np.ndarray:
        """Map per-actuator ``(d_tl, d_br)`` pairs to an action array."""
        if len(telemetry) != len(self.nets):
            raise ValueError(f"expected telemetry for {len(self.nets)} actuators, got {len(telemetry)}")
        mode = self.output_mode
        return np.array(
            [net.compute((float(pair[0]), float(pair[1])), mode) for net, pair in zip(self.nets, telemetry)]
        )

    def reset(self) -> SNNController:
        for net in self.nets:
            net.reset()
        return self

    def genome(self) -> np.ndarray:
        return genome_encode([net.params for net in self.nets])


def controller_step(controller: SNNController, telemetry) -> np.ndarray:
    return controller.step(telemetry)


def controller_reset(controller: SNNController) -> SNNController:
    return controller.reset()


def format_genome(genome) -> str:
    """One CSV row, with ``repr`` floats so the values round-trip exactly."""
    return ",".join(repr(float(x)) for x in np.asarray(genome, dtype=float).ravel())


def write_genome(path: str | Path, genome) -> None:
    Path(path).write_text(format_genome(genome) + "\n", encoding="utf-8")


def read_genome(path: str | Path) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8")
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if len(rows) != 1:
        raise GenomeError(f"genome file {path} must hold exactly one CSV row")
    try:
        return np.array([float(x) for x in rows[0]])
    except ValueError as exc:
        raise GenomeError(f"genome file {path}: {exc}") from exc
