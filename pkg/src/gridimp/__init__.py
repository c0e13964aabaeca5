"""gridimp: series-impedance and state estimation for LV feeders from
smart-meter time series, with impedances parameterized through Carson's
equations."""

__version__ = "0.1.0"
