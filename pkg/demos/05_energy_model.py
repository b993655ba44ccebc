"""
Where should each stage run?
============================

The energy model charges compute by process node and charges every byte
that crosses the sensor link. This script compares the three named
placements, searches all sixteen, and shows how an older sensor node
flips the answer.
"""

from edar.energy import COMPONENTS, mode_of, mode_scenario, optimal_mapping, scenario_energy

print(f"{'mode':<6}{'compute':>12}{'transmit':>12}{'total':>12}   in sensor")
for m in "abc":
    s = mode_scenario(m)
    e = scenario_energy(s)
    print(f"{m:<6}{e.compute_energy / 1e6:>11.1f}M{e.transmission_energy / 1e6:>11.1f}M{e.total / 1e6:>11.1f}M"
          f"   {', '.join(s.sensor_components()) or '-'}")

best = optimal_mapping()
print("\noptimal placement at 7nm/7nm:", {c: best.placement[c] for c in COMPONENTS}, "-> mode", mode_of(best.placement))

# %%
# Link traffic with and without extrapolation.
a = scenario_energy(mode_scenario("a")).transmission_energy
for frac in (0.0, 0.5):
    c = scenario_energy(mode_scenario("c", extrapolated_fraction=frac)).transmission_energy
    print(f"extrapolated fraction {frac}: transmission {1 - c / a:.1%} below mode a")

# %%
# Sweep the sensor node while the processor stays at 7nm.
for node in (7, 10, 16, 22, 28, 40):
    t = {m: scenario_energy(mode_scenario(m, sensor_node=node)).total for m in "abc"}
    pick = mode_of(optimal_mapping(sensor_node=node).placement) or "other"
    print(f"sensor {node:>2}nm  b/a {t['b'] / t['a']:.2f}  c/a {t['c'] / t['a']:.2f}  optimum {pick}")
