"""Server, network and cooling power; piecewise-constant energy integration."""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import Datacenter, Server

JOULES_PER_WH = 3600.0


def server_power(server: Server, utilization: float) -> float:
    """Linear power model: idle share K of P_max plus the rest scaled by load.

    Load above 100% draws P_max; a sleeping server draws nothing.
    """
    draw = estimated_power(server, utilization)
    return draw if server.is_on else 0.0


def estimated_power(server: Server, utilization: float) -> float:
    """Power the server would draw at ``utilization`` if it were On."""
    if utilization < 0:
        raise ValueError(f"negative utilization {utilization}")
    k, p_max = server.k_idle_fraction, server.p_max_watts
    return k * p_max + (1.0 - k) * p_max * min(utilization, 1.0)


@dataclass(frozen=True)
class PowerBreakdown:
    servers_watts: float = 0.0
    cooling_watts: float = 0.0
    tor_watts: float = 0.0
    aggregate_watts: float = 0.0
    core_watts: float = 0.0
    network_watts: float = field(init=False)
    total_watts: float = field(init=False)

    def __post_init__(self):
        network = self.tor_watts + self.aggregate_watts + self.core_watts
        object.__setattr__(self, "network_watts", network)
        object.__setattr__(
            self, "total_watts", self.servers_watts + self.cooling_watts + network
        )


def network_power(dc: Datacenter) -> tuple[float, float, float]:
    """(ToR, aggregate, core) watts for the switches that are powered.

    A ToR switch is on iff its rack is active, an aggregate switch iff any of
    its racks is, and the core router iff any rack in the datacenter is.
    """
    topo = dc.topology
    active = {r.id for r in topo.racks if dc.rack_active(r.id)}
    tor = sum(topo.racks[r].tor_switch_power_watts for r in sorted(active))
    agg = sum(a.power_watts for a in topo.aggregate_switches if a.rack_ids & active)
    core = topo.core_router_power_watts if active else 0.0
    return float(tor), float(agg), float(core)


def cooling_power(dc: Datacenter) -> float:
    return float(
        sum(r.cooling_power_watts for r in dc.topology.racks if dc.rack_active(r.id))
    )


def datacenter_power(dc: Datacenter) -> PowerBreakdown:
    servers = sum(
        server_power(s, dc.utilization(s.id)) for s in dc.topology.servers if s.is_on
    )
    tor, agg, core = network_power(dc)
    return PowerBreakdown(
        servers_watts=float(servers),
        cooling_watts=cooling_power(dc),
        tor_watts=tor,
        aggregate_watts=agg,
        core_watts=core,
    )


COMPONENTS = ("servers", "cooling", "network", "tor", "aggregate", "core", "total")


@dataclass
class EnergyLedger:
    """Per-epoch power samples and cumulative energy per component (joules)."""

    samples: list[tuple[PowerBreakdown, float]] = field(default_factory=list)
    joules: dict[str, float] = field(default_factory=lambda: dict.fromkeys(COMPONENTS, 0.0))

    def watt_hours(self, component: str = "total") -> float:
        return self.joules[component] / JOULES_PER_WH


def accumulate_energy(
    ledger: EnergyLedger, breakdown: PowerBreakdown, epoch_seconds: float
) -> EnergyLedger:
    if epoch_seconds <= 0:
        raise ValueError(f"epoch duration must be positive, got {epoch_seconds}")
    ledger.samples.append((breakdown, epoch_seconds))
    for c in COMPONENTS:
        ledger.joules[c] += getattr(breakdown, f"{c}_watts") * epoch_seconds
    return ledger
