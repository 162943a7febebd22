"""
Physical scene: uniform linear array, line-of-sight channels and the
sampled desired transmit beampattern.

All quantities are kept in linear units internally (mW, metres, radians).
Decibel and degree values only appear at the construction boundary, see
:func:`Scenario.from_dict`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Any, Mapping, Sequence

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s


class ScenarioError(ValueError):
    """Raised for out-of-domain inputs (angles, distances, geometry)."""


class AmbiguousPatternError(ScenarioError):
    """Overlapping mainlobes request different desired levels."""


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    """10*log10(x); -inf for nonpositive input."""
    if x <= 0.0:
        return -math.inf
    return 10.0 * math.log10(x)


def _check_angle(theta_deg: float, closed: bool = False) -> None:
    ok = -90.0 <= theta_deg <= 90.0 if closed else -90.0 < theta_deg < 90.0
    if not np.isfinite(theta_deg) or not ok:
        raise ScenarioError(f"angle {theta_deg!r} deg outside {'[-90, 90]' if closed else '(-90, 90)'}")


def _check_distance(d: float) -> None:
    if not np.isfinite(d) or d <= 0.0:
        raise ScenarioError(f"distance must be positive, got {d!r}")


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array.

    Parameters
    ----------
    num_antennas : int
        Number of elements, at least 2.
    carrier_frequency : float
        Carrier frequency in Hz.
    element_spacing : float, optional
        Spacing in metres. Defaults to half a wavelength.
    """

    num_antennas: int
    carrier_frequency: float
    element_spacing: float | None = None

    def __post_init__(self):
        if int(self.num_antennas) != self.num_antennas or self.num_antennas < 2:
            raise ScenarioError(f"num_antennas must be an integer >= 2, got {self.num_antennas!r}")
        if not self.carrier_frequency > 0:
            raise ScenarioError("carrier_frequency must be positive")
        if self.element_spacing is None:
            object.__setattr__(self, "element_spacing", self.wavelength / 2.0)
        elif not self.element_spacing > 0:
            raise ScenarioError("element_spacing must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency


@dataclass(frozen=True)
class UserSpec:
    """Communication user. ``noise_power`` is linear mW, gains are linear."""

    angle: float
    distance: float
    noise_power: float
    tx_gain: float = 1.0
    rx_gain: float = 1.0

    def __post_init__(self):
        _check_angle(self.angle)
        _check_distance(self.distance)
        if not self.noise_power > 0:
            raise ScenarioError("noise_power must be positive (linear mW)")
        if not (self.tx_gain > 0 and self.rx_gain > 0):
            raise ScenarioError("antenna gains must be positive (linear)")


@dataclass(frozen=True)
class TargetSpec:
    angle: float
    distance: float
    tx_gain: float = 1.0
    rx_gain: float = 1.0

    def __post_init__(self):
        _check_angle(self.angle)
        _check_distance(self.distance)


@dataclass(frozen=True)
class PatternSample:
    angle: float  # degrees
    level: float  # desired transmit beampattern level (linear)
    tolerance: float  # half-width of the admissible band (linear)
    pathloss: float = 1.0  # power gain of the owning target, for channel-inclusive mode


@dataclass(frozen=True)
class DesiredBeampattern:
    samples: tuple[PatternSample, ...]

    def __post_init__(self):
        if len(self.samples) == 0:
            raise ScenarioError("desired beampattern needs at least one sample")
        for s in self.samples:
            if s.level < 0 or not s.tolerance > 0:
                raise ScenarioError(f"invalid pattern sample {s}")

    def __len__(self):
        return len(self.samples)

    @property
    def angles(self) -> np.ndarray:
        return np.array([s.angle for s in self.samples])

    @property
    def levels(self) -> np.ndarray:
        return np.array([s.level for s in self.samples])

    @property
    def tolerances(self) -> np.ndarray:
        return np.array([s.tolerance for s in self.samples])


# Keys accepted in a scenario document, with their boundary units.
_SCENARIO_KEYS = {
    "num_antennas", "carrier_frequency_hz", "element_spacing_m",
    "users", "targets", "rate_floor", "beam_width_deg",
    "target_receive_level_dbm", "grid_resolution_deg",
    "sidelobe_region_enabled", "sidelobe_level", "sidelobe_tolerance",
    "mainlobe_tolerance_fraction", "pattern_metric", "include_radar_covariance",
    "name",
}
_USER_KEYS = {"angle_deg", "distance_m", "noise_power_dbm", "tx_gain_db", "rx_gain_db"}
_TARGET_KEYS = {"angle_deg", "distance_m", "tx_gain_db", "rx_gain_db"}


def _reject_unknown(d: Mapping[str, Any], allowed: set[str], where: str) -> None:
    if not isinstance(d, Mapping):
        raise ScenarioError(f"{where}: expected a mapping, got {type(d).__name__}")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ScenarioError(f"{where}: unknown key(s) {unknown}")


@dataclass(frozen=True)
class Scenario:
    """A complete problem instance.

    ``target_receive_level`` is linear mW. ``pattern_metric`` selects whether
    pattern constraints act on the transmit beampattern ("transmit", default)
    or on the channel-inclusive beam gain ("channel").
    """

    array: ArrayGeometry
    users: tuple[UserSpec, ...]
    targets: tuple[TargetSpec, ...]
    rate_floor: float
    beam_width: float = 5.0
    target_receive_level: float = db_to_linear(-13.0)
    grid_resolution: float = 1.0
    sidelobe_region_enabled: bool = False
    sidelobe_level: float = 0.0
    sidelobe_tolerance: float = 1.0
    mainlobe_tolerance_fraction: float = 0.1
    pattern_metric: str = "transmit"
    include_radar_covariance: bool = True
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "targets", tuple(self.targets))
        if len(self.users) < 1 or len(self.targets) < 1:
            raise ScenarioError("need at least one user and one target")
        if not self.rate_floor > 0:
            raise ScenarioError("rate_floor must be positive")
        if not self.beam_width >= 0:
            raise ScenarioError("beam_width must be nonnegative")
        if not self.target_receive_level > 0:
            raise ScenarioError("target_receive_level must be positive")
        if not self.grid_resolution > 0:
            raise ScenarioError("grid_resolution must be positive")
        if not 0 < self.mainlobe_tolerance_fraction < 1:
            raise ScenarioError("mainlobe_tolerance_fraction must lie in (0, 1)")
        if self.sidelobe_region_enabled:
            if self.sidelobe_level < 0 or not self.sidelobe_tolerance > 0:
                raise ScenarioError("sidelobe level must be >= 0 and tolerance > 0")
        if self.pattern_metric not in ("transmit", "channel"):
            raise ScenarioError(f"unknown pattern_metric {self.pattern_metric!r}")
        for t in self.targets:
            lo, hi = t.angle - self.beam_width / 2, t.angle + self.beam_width / 2
            if not (-90.0 < lo and hi < 90.0):
                raise ScenarioError(f"mainlobe [{lo}, {hi}] of target at {t.angle} deg leaves (-90, 90)")

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def sinr_threshold(self) -> float:
        return 2.0 ** self.rate_floor - 1.0

    def replace(self, **changes) -> "Scenario":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return Scenario(**kw)

    def with_antennas(self, n: int) -> "Scenario":
        arr = ArrayGeometry(n, self.array.carrier_frequency, self.array.element_spacing)
        return self.replace(array=arr)

    # -- boundary conversion -------------------------------------------------

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Scenario":
        """Build from a config mapping (degrees, dBm, dB, metres, Hz)."""
        _reject_unknown(doc, _SCENARIO_KEYS, "scenario")
        try:
            spacing = doc.get("element_spacing_m")
            array = ArrayGeometry(int(doc["num_antennas"]), float(doc["carrier_frequency_hz"]),
                                  None if spacing is None else float(spacing))
            users = []
            for i, u in enumerate(doc["users"]):
                _reject_unknown(u, _USER_KEYS, f"users[{i}]")
                users.append(UserSpec(
                    angle=float(u["angle_deg"]),
                    distance=float(u["distance_m"]),
                    noise_power=db_to_linear(float(u["noise_power_dbm"])),
                    tx_gain=db_to_linear(float(u.get("tx_gain_db", 0.0))),
                    rx_gain=db_to_linear(float(u.get("rx_gain_db", 0.0))),
                ))
            targets = []
            for i, t in enumerate(doc["targets"]):
                _reject_unknown(t, _TARGET_KEYS, f"targets[{i}]")
                targets.append(TargetSpec(
                    angle=float(t["angle_deg"]),
                    distance=float(t["distance_m"]),
                    tx_gain=db_to_linear(float(t.get("tx_gain_db", 0.0))),
                    rx_gain=db_to_linear(float(t.get("rx_gain_db", 0.0))),
                ))
            kw = dict(
                array=array, users=users, targets=targets,
                rate_floor=float(doc["rate_floor"]),
            )
        except KeyError as exc:
            raise ScenarioError(f"missing required key {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"malformed value: {exc}") from None
        opt = {
            "beam_width_deg": ("beam_width", float),
            "target_receive_level_dbm": ("target_receive_level", lambda v: db_to_linear(float(v))),
            "grid_resolution_deg": ("grid_resolution", float),
            "sidelobe_region_enabled": ("sidelobe_region_enabled", bool),
            "sidelobe_level": ("sidelobe_level", float),
            "sidelobe_tolerance": ("sidelobe_tolerance", float),
            "mainlobe_tolerance_fraction": ("mainlobe_tolerance_fraction", float),
            "pattern_metric": ("pattern_metric", str),
            "include_radar_covariance": ("include_radar_covariance", bool),
            "name": ("name", str),
        }
        for key, (attr, conv) in opt.items():
            if key in doc:
                try:
                    kw[attr] = conv(doc[key])
                except (TypeError, ValueError) as exc:
                    raise ScenarioError(f"malformed value for {key}: {exc}") from None
        return cls(**kw)

    def to_dict(self) -> dict[str, Any]:
        """Inverse of :meth:`from_dict`."""
        return {
            "name": self.name,
            "num_antennas": self.array.num_antennas,
            "carrier_frequency_hz": self.array.carrier_frequency,
            "element_spacing_m": self.array.element_spacing,
            "users": [
                {"angle_deg": u.angle, "distance_m": u.distance,
                 "noise_power_dbm": linear_to_db(u.noise_power),
                 "tx_gain_db": linear_to_db(u.tx_gain), "rx_gain_db": linear_to_db(u.rx_gain)}
                for u in self.users
            ],
            "targets": [
                {"angle_deg": t.angle, "distance_m": t.distance,
                 "tx_gain_db": linear_to_db(t.tx_gain), "rx_gain_db": linear_to_db(t.rx_gain)}
                for t in self.targets
            ],
            "rate_floor": self.rate_floor,
            "beam_width_deg": self.beam_width,
            "target_receive_level_dbm": linear_to_db(self.target_receive_level),
            "grid_resolution_deg": self.grid_resolution,
            "sidelobe_region_enabled": self.sidelobe_region_enabled,
            "sidelobe_level": self.sidelobe_level,
            "sidelobe_tolerance": self.sidelobe_tolerance,
            "mainlobe_tolerance_fraction": self.mainlobe_tolerance_fraction,
            "pattern_metric": self.pattern_metric,
            "include_radar_covariance": self.include_radar_covariance,
        }


def load_scenario(path) -> Scenario:
    """Read a YAML (or JSON) scenario document."""
    import yaml

    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: not a valid YAML/JSON document: {exc}") from None
    if doc is None:
        raise ScenarioError(f"{path}: empty document")
    return Scenario.from_dict(doc)


# -- array response ----------------------------------------------------------

def steering_vector(array: ArrayGeometry, theta: float) -> np.ndarray:
    """ULA response; element n has phase 2*pi*(d/lambda)*n*cos(theta).

    ``theta`` is in degrees. Note cos is even, so +theta and -theta
    produce the same vector. Endfire angles +-90 are accepted.
    """
    _check_angle(theta, closed=True)
    n = np.arange(array.num_antennas)
    spacing = array.element_spacing / array.wavelength
    return np.exp(1j * 2.0 * np.pi * spacing * n * np.cos(np.deg2rad(theta)))


def pathloss(distance: float, tx_gain: float, rx_gain: float, wavelength: float) -> float:
    """Free-space large-scale power gain G_T G_R lambda^2 / ((4 pi)^2 d^2)."""
    _check_distance(distance)
    if not (wavelength > 0 and tx_gain > 0 and rx_gain > 0):
        raise ScenarioError("wavelength and gains must be positive")
    return tx_gain * rx_gain * wavelength**2 / ((4.0 * np.pi) ** 2 * distance**2)


def entity_pathloss(array: ArrayGeometry, spec: UserSpec | TargetSpec) -> float:
    return pathloss(spec.distance, spec.tx_gain, spec.rx_gain, array.wavelength)


def channel_vector(array: ArrayGeometry, spec: UserSpec | TargetSpec) -> np.ndarray:
    """LOS channel sqrt(beta) * a(theta); ``beta`` is a power gain."""
    return math.sqrt(entity_pathloss(array, spec)) * steering_vector(array, spec.angle)


# -- desired pattern ---------------------------------------------------------

def _grid_in(lo: float, hi: float, step: float) -> list[float]:
    eps = 1e-9
    k0 = math.ceil(lo / step - eps)
    k1 = math.floor(hi / step + eps)
    return [k * step for k in range(k0, k1 + 1)]


def _key(theta: float) -> float:
    return round(theta, 9)


def build_desired_pattern(scenario: Scenario) -> DesiredBeampattern:
    """Sample the desired beampattern.

    Each target contributes grid points within its mainlobe plus its own
    angle, at level ``Gamma / beta_p`` (so that the target receives Gamma)
    with tolerance ``mainlobe_tolerance_fraction * level``. Optional
    sidelobe samples cover the remaining grid points.
    """
    sc = scenario
    half = sc.beam_width / 2.0
    chosen: dict[float, PatternSample] = {}
    lobes = []
    for t in sc.targets:
        beta = entity_pathloss(sc.array, t)
        level = sc.target_receive_level / beta
        tol = sc.mainlobe_tolerance_fraction * level
        lobes.append((t.angle - half, t.angle + half))
        for theta in _grid_in(t.angle - half, t.angle + half, sc.grid_resolution) + [t.angle]:
            key = _key(theta)
            prev = chosen.get(key)
            if prev is not None:
                if not math.isclose(prev.level, level, rel_tol=1e-12):
                    raise AmbiguousPatternError(
                        f"sample at {key} deg claimed by mainlobes with levels "
                        f"{prev.level:g} and {level:g}")
                continue
            chosen[key] = PatternSample(key, level, tol, beta)

    if sc.sidelobe_region_enabled:
        for theta in _grid_in(-90.0, 90.0, sc.grid_resolution):
            key = _key(theta)
            if not (-90.0 < key < 90.0) or key in chosen:
                continue
            if any(lo - 1e-9 <= key <= hi + 1e-9 for lo, hi in lobes):
                continue
            # channel-inclusive mode weights sidelobes by the angularly nearest target
            near = min(sc.targets, key=lambda t: abs(t.angle - key))
            chosen[key] = PatternSample(key, sc.sidelobe_level, sc.sidelobe_tolerance,
                                        entity_pathloss(sc.array, near))

    return DesiredBeampattern(tuple(chosen[k] for k in sorted(chosen)))


def angle_grid(step: float = 1.0) -> np.ndarray:
    """Inclusive grid over [-90, 90] degrees used for beampattern exports."""
    n = int(round(180.0 / step))
    return np.linspace(-90.0, 90.0, n + 1)


def steering_matrix(array: ArrayGeometry, angles: Sequence[float]) -> np.ndarray:
    """Columns are steering vectors for each angle in degrees."""
    n = np.arange(array.num_antennas)[:, None]
    spacing = array.element_spacing / array.wavelength
    th = np.deg2rad(np.asarray(angles, dtype=float))[None, :]
    return np.exp(1j * 2.0 * np.pi * spacing * n * np.cos(th))
