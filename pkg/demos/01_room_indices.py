"""
Indoor air quality indices for one hour of readings
===================================================

Sub-indices come from linear interpolation inside breakpoint bands. The
worst pollutant sets the overall IAQI, and humidex adds thermal comfort.
"""

from iaqfusion import ChannelKind, default_breakpoint_tables
from iaqfusion.indices import (
    EiaqiWeights,
    eiaqi,
    humidex,
    overall_iaqi,
    subindex,
    weightage_label,
)

tables = default_breakpoint_tables()

###############################################################################
# One hour of sensor readings (ppm, oxygen in %)
reading = {
    ChannelKind.CO: 1.52,
    ChannelKind.CO2: 230.4295,
    ChannelKind.O2: 19.7347,
    ChannelKind.NH3: 27.0,
    ChannelKind.H2S: 0.9,
}
subs = {ch: subindex(tables[ch], c) for ch, c in reading.items()}
for ch, iv in subs.items():
    print(f"{ch.value:>8}: {reading[ch]:>9} -> {iv.value:8.4f}  {iv.category.label}")

# Oxygen is the odd one out: less oxygen is worse, so its table runs the
# other way and gets its own formula.
overall = overall_iaqi(list(subs.values()))
print(f"overall IAQI (max rule): {overall.value:.4f} {overall.category.label}")
print(f"overall IAQI (mean rule): {overall_iaqi(list(subs.values()), 'mean').value:.4f}")

###############################################################################
# Thermal comfort and the enhanced index
h = humidex(31.0, 40.0)
print(f"humidex at 31 °C / 40 %RH: {h.value:.2f} ({h.rating.label})")

for w in (EiaqiWeights(1.0, 1.0), EiaqiWeights(0.5, 1.0)):
    print(f"EIAQI with w_h={w.w_h}, w_iaqi={w.w_iaqi}: {eiaqi(overall, h, w):.2f}")

###############################################################################
# The categorical version only looks at the two labels
total, label = weightage_label(subs[ChannelKind.CO2].category, h.rating)
print(f"CO2 alone ({subs[ChannelKind.CO2].category.label}) with {h.rating.label}: {total} -> {label}")
total, label = weightage_label(overall.category, h.rating)
print(f"overall ({overall.category.label}) with {h.rating.label}: {total} -> {label}")
