"""Reduced-order CCCV charging simulator for cells and multi-module packs.

The cell model tracks three states: bulk state of charge, a first-order RC
polarization voltage, and a surface-equivalent SOC that lags the bulk SOC
with a diffusion time constant.  Terminal voltage is

    v = OCV(soc_surf) + i * r0 + v_rc

with OCV linearly interpolated from a monotone knot table.  Charging current
is positive.  All state updates use the exact closed-form solution of the
linear ODEs over a step with constant current, so one macro step equals any
number of sub-steps up to float roundoff.

A pack is q parallel modules, each made of `branches_per_module` identical
parallel branches of `series_cells` cells.  Modules connect to a common
charger bus through per-module interconnect resistances; the current split
across modules is the exact solution of the parallel constraint (one shared
bus voltage, Kirchhoff current balance).  The recorded module voltage is the
series sum of one representative branch, i.e. the bus voltage minus that
module's interconnect drop, which is what gives packs their stable module
voltage ordering.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

# Default knot table: generic NMC-style curve, strictly increasing.
DEFAULT_OCV_KNOTS = (
    (0.00, 3.000),
    (0.05, 3.250),
    (0.10, 3.420),
    (0.20, 3.550),
    (0.30, 3.620),
    (0.40, 3.670),
    (0.50, 3.720),
    (0.60, 3.780),
    (0.70, 3.850),
    (0.80, 3.940),
    (0.90, 4.060),
    (1.00, 4.200),
)


class SolverError(RuntimeError):
    """Charging regulation failed; carries the offending step index."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class CellParams:
    """Electrical parameters of a single cell."""

    capacity_ah: float = 5.0
    r0_ohm: float = 0.018
    r1_ohm: float = 0.012
    c1_f: float = 2500.0
    diff_tau_s: float = 45.0
    ocv_knots: tuple = DEFAULT_OCV_KNOTS
    v_max: float = 4.2
    v_min: float = 2.5

    def __post_init__(self):
        if not self.capacity_ah > 0:
            raise ValueError("capacity_ah must be positive")
        if self.r0_ohm < 0 or self.r1_ohm < 0:
            raise ValueError("resistances must be nonnegative")
        if not self.c1_f > 0:
            raise ValueError("c1_f must be positive")
        if not self.diff_tau_s > 0:
            raise ValueError("diff_tau_s must be positive")
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")
        socs = [s for s, _ in self.ocv_knots]
        volts = [v for _, v in self.ocv_knots]
        if len(socs) < 2 or socs[0] != 0.0 or socs[-1] != 1.0:
            raise ValueError("ocv_knots must span soc 0..1")
        if any(b <= a for a, b in zip(socs, socs[1:])):
            raise ValueError("ocv_knots soc values must be strictly increasing")
        if any(b <= a for a, b in zip(volts, volts[1:])):
            raise ValueError("ocv_knots voltages must be strictly increasing")
        object.__setattr__(self, "_ocv_socs", tuple(socs))
        object.__setattr__(self, "_ocv_volts", tuple(volts))

    def ocv(self, soc_surf):
        """Open-circuit voltage, linear interpolation clamped to the table ends."""
        if isinstance(soc_surf, (int, float)):
            return self.ocv_scalar(float(soc_surf))
        return np.interp(soc_surf, np.array(self._ocv_socs), np.array(self._ocv_volts))

    def ocv_scalar(self, s: float) -> float:
        socs, volts = self._ocv_socs, self._ocv_volts
        if s <= socs[0]:
            return volts[0]
        if s >= socs[-1]:
            return volts[-1]
        j = bisect_right(socs, s)
        frac = (s - socs[j - 1]) / (socs[j] - socs[j - 1])
        return volts[j - 1] + frac * (volts[j] - volts[j - 1])


@dataclass(frozen=True)
class CellState:
    """Dynamic state of one cell: bulk SOC, RC voltage, surface SOC."""

    soc: float
    v_rc: float = 0.0
    soc_surf: float | None = None

    def __post_init__(self):
        if self.soc_surf is None:
            object.__setattr__(self, "soc_surf", self.soc)
        if not 0.0 <= self.soc <= 1.0:
            raise ValueError("soc must be in [0, 1]")
        if not 0.0 <= self.soc_surf <= 1.0:
            raise ValueError("soc_surf must be in [0, 1]")


@dataclass(frozen=True)
class PackConfig:
    """Pack topology and generation knobs.

    ``interconnect_ohm`` is the per-module series resistance between the
    module terminals and the shared charger bus.  A scalar applies to every
    module (identical modules); a sequence gives one value per module, which
    is how the canonical packs obtain their stable ascending voltage
    ordering.  ``heterogeneity_sigma`` is the relative std-dev of the
    multiplicative per-cell perturbation applied to capacity and r0, drawn
    from ``rng_seed``.
    """

    name: str
    parallel_modules: int
    branches_per_module: int
    series_cells: int
    capacity_ah: float
    v_max_pack: float
    heterogeneity_sigma: float = 0.01
    rng_seed: int = 0
    interconnect_ohm: float | tuple = 0.0

    def __post_init__(self):
        if self.parallel_modules < 1 or self.branches_per_module < 1 or self.series_cells < 1:
            raise ValueError("pack topology counts must be >= 1")
        if self.heterogeneity_sigma < 0:
            raise ValueError("heterogeneity_sigma must be nonnegative")
        if isinstance(self.interconnect_ohm, (int, float)):
            object.__setattr__(
                self, "interconnect_ohm",
                (float(self.interconnect_ohm),) * self.parallel_modules)
        else:
            object.__setattr__(self, "interconnect_ohm", tuple(float(r) for r in self.interconnect_ohm))
        if len(self.interconnect_ohm) != self.parallel_modules:
            raise ValueError("interconnect_ohm needs one value per module")
        if any(r < 0 for r in self.interconnect_ohm):
            raise ValueError("interconnect resistances must be nonnegative")

    @property
    def q(self) -> int:
        return self.parallel_modules

    def validate_capacity(self, cell: CellParams) -> None:
        """Pack capacity must equal cell capacity times parallel string count."""
        expected = cell.capacity_ah * self.parallel_modules * self.branches_per_module
        if abs(self.capacity_ah - expected) > 1e-9 * expected:
            raise ValueError(
                f"pack capacity {self.capacity_ah} Ah inconsistent with "
                f"{self.parallel_modules}x{self.branches_per_module} strings of "
                f"{cell.capacity_ah} Ah cells")


@dataclass(frozen=True)
class CccvPolicy:
    """Constant-current / constant-voltage charging policy."""

    c_rate: float
    v_max: float = 4.2
    taper_cutoff_c: float = 0.05
    duration_s: float = 900.0

    def __post_init__(self):
        if not self.c_rate > 0:
            raise ValueError("c_rate must be positive")
        if not 0 < self.taper_cutoff_c < self.c_rate:
            raise ValueError("taper_cutoff_c must be in (0, c_rate)")
        if not self.duration_s > 0:
            raise ValueError("duration_s must be positive")


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement noise: N(0, sigma^2) with sigma = rel_sigma * true voltage."""

    rel_sigma: float = 0.001

    def __post_init__(self):
        if self.rel_sigma < 0:
            raise ValueError("rel_sigma must be nonnegative")


@dataclass(frozen=True)
class TelemetryFrame:
    """One recorded sample: time, pack current, q module voltages."""

    t_s: float
    i_pack_a: float
    v_modules: tuple

    def __post_init__(self):
        if self.t_s < 0:
            raise ValueError("t_s must be nonnegative")
        object.__setattr__(self, "v_modules", tuple(float(v) for v in self.v_modules))

    @property
    def q(self) -> int:
        return len(self.v_modules)


@dataclass
class TelemetryTrace:
    """Recorded charging run at 1 Hz.

    ``v_modules`` has shape (n, q).  ``i_modules`` is a noise-free per-module
    current diagnostic kept for balance checks; it is not part of the CSV
    schema.  ``attack_mask`` is set on corrupted traces (1 inside the attack
    window).
    """

    t_s: np.ndarray
    i_pack_a: np.ndarray
    v_modules: np.ndarray
    i_modules: np.ndarray | None = None
    attack_mask: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.t_s = np.asarray(self.t_s, dtype=float)
        self.i_pack_a = np.asarray(self.i_pack_a, dtype=float)
        self.v_modules = np.atleast_2d(np.asarray(self.v_modules, dtype=float))
        n = self.t_s.shape[0]
        if self.i_pack_a.shape != (n,) or self.v_modules.shape[0] != n:
            raise ValueError("trace arrays must have matching lengths")
        if n > 1 and not np.all(np.diff(self.t_s) > 0):
            raise ValueError("t_s must be strictly increasing")
        if np.any(self.t_s < 0):
            raise ValueError("t_s must be nonnegative")

    @property
    def n_frames(self) -> int:
        return self.t_s.shape[0]

    @property
    def q(self) -> int:
        return self.v_modules.shape[1]

    def frame(self, k: int) -> TelemetryFrame:
        return TelemetryFrame(float(self.t_s[k]), float(self.i_pack_a[k]),
                              tuple(self.v_modules[k]))

    def frames(self):
        for k in range(self.n_frames):
            yield self.frame(k)

    def copy(self) -> "TelemetryTrace":
        return TelemetryTrace(
            self.t_s.copy(), self.i_pack_a.copy(), self.v_modules.copy(),
            None if self.i_modules is None else self.i_modules.copy(),
            None if self.attack_mask is None else self.attack_mask.copy(),
            self.name)

    def __eq__(self, other):
        if not isinstance(other, TelemetryTrace):
            return NotImplemented
        if self.v_modules.shape != other.v_modules.shape:
            return False
        same = (np.array_equal(self.t_s, other.t_s)
                and np.array_equal(self.i_pack_a, other.i_pack_a)
                and np.array_equal(self.v_modules, other.v_modules))
        if not same:
            return False
        if (self.attack_mask is None) != (other.attack_mask is None):
            return False
        if self.attack_mask is not None:
            return np.array_equal(self.attack_mask, other.attack_mask)
        return True


# ---------------------------------------------------------------------------
# Single-cell dynamics
# ---------------------------------------------------------------------------

def step_cell(state: CellState, params: CellParams, i_cell: float, dt: float) -> CellState:
    """Advance one cell by dt seconds at constant current (exact update).

    SOC integrates the current (clamped to [0, 1] afterwards), the RC state
    relaxes exponentially toward ``i * r1``, and the surface SOC tracks the
    linearly-moving bulk SOC with time constant ``diff_tau_s``.
    """
    _require_finite("i_cell", i_cell)
    _require_finite("dt", dt)
    if not dt > 0:
        raise ValueError("dt must be positive")

    d_soc = i_cell * dt / 3600.0 / params.capacity_ah
    soc_new = min(max(state.soc + d_soc, 0.0), 1.0)

    if params.r1_ohm > 0.0:
        tau1 = params.r1_ohm * params.c1_f
        v_inf = i_cell * params.r1_ohm
        v_rc_new = v_inf + (state.v_rc - v_inf) * math.exp(-dt / tau1)
    else:
        v_rc_new = 0.0

    # Exact solution of d(surf)/dt = (soc(t) - surf)/tau with soc(t) linear.
    tau_d = params.diff_tau_s
    rate = d_soc / dt
    decay = math.exp(-dt / tau_d)
    surf_new = (state.soc + d_soc) - rate * tau_d + (
        state.soc_surf - state.soc + rate * tau_d) * decay
    surf_new = min(max(surf_new, 0.0), 1.0)

    return CellState(soc=soc_new, v_rc=v_rc_new, soc_surf=surf_new)


def cell_voltage(state: CellState, params: CellParams, i_cell: float) -> float:
    """Terminal voltage at the given applied current."""
    _require_finite("i_cell", i_cell)
    return params.ocv_scalar(state.soc_surf) + i_cell * params.r0_ohm + state.v_rc


def _quantize(values: np.ndarray) -> np.ndarray:
    # Recorded voltages carry 6 decimals; quantizing at the source makes
    # CSV round-trips bit-exact.
    return np.round(values, 6)


def run_cccv_cell(params: CellParams, policy: CccvPolicy, init_soc: float,
                  noise: NoiseSpec = NoiseSpec(), seed: int = 0,
                  name: str = "") -> TelemetryTrace:
    """Simulate one CCCV charge of a single cell, recorded at 1 Hz.

    CC holds ``c_rate * capacity`` amps until the noise-free terminal voltage
    reaches ``policy.v_max``; CV then solves the current each sub-step so the
    terminal voltage sits at the setpoint, tapering until the cutoff C-rate,
    after which the cell rests at zero current for the remaining duration.
    Measurement noise only touches the recorded voltages.
    """
    if not 0.0 <= init_soc < 1.0:
        raise ValueError("init_soc must be in [0, 1)")
    if float(params.ocv(init_soc)) >= policy.v_max:
        raise ValueError(
            f"infeasible policy: OCV({init_soc}) >= v_max {policy.v_max}")

    i_cc = policy.c_rate * params.capacity_ah
    i_cut = policy.taper_cutoff_c * params.capacity_ah
    n_records = int(policy.duration_s) + 1
    sub_dt = 0.1
    state = CellState(soc=init_soc)
    phase = "cc"

    t_out = np.arange(n_records, dtype=float)
    i_out = np.empty(n_records)
    v_out = np.empty(n_records)

    def current_now(st: CellState, step: int) -> float:
        nonlocal phase
        if phase == "cc":
            if cell_voltage(st, params, i_cc) >= policy.v_max:
                phase = "cv"
            else:
                return i_cc
        if phase == "cv":
            if params.r0_ohm <= 0.0:
                raise SolverError("cannot regulate voltage with r0 = 0", step)
            i_cv = (policy.v_max - params.ocv_scalar(st.soc_surf) - st.v_rc) / params.r0_ohm
            if i_cv < -1e-9:
                raise SolverError("CV solve produced negative current", step)
            i_cv = min(max(i_cv, 0.0), i_cc)
            if i_cv <= i_cut:
                phase = "rest"
            else:
                return i_cv
        return 0.0

    sub_step = 0
    for k in range(n_records):
        i_k = current_now(state, sub_step)
        i_out[k] = i_k
        v_out[k] = cell_voltage(state, params, i_k)
        if k == n_records - 1:
            break
        for _ in range(10):
            i_sub = current_now(state, sub_step)
            state = step_cell(state, params, i_sub, sub_dt)
            sub_step += 1

    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n_records)
    v_rec = v_out * (1.0 + noise.rel_sigma * z)
    return TelemetryTrace(
        t_s=t_out, i_pack_a=i_out, v_modules=_quantize(v_rec)[:, None],
        i_modules=i_out[:, None].copy(), name=name)


# ---------------------------------------------------------------------------
# Pack dynamics
# ---------------------------------------------------------------------------

class _PackModel:
    """Vectorized state of q representative branches of series cells."""

    def __init__(self, config: PackConfig, cell: CellParams, init_soc: float):
        config.validate_capacity(cell)
        q, s = config.q, config.series_cells
        rng = np.random.default_rng(config.rng_seed)
        sigma = config.heterogeneity_sigma
        # Draw order is part of the determinism contract: capacity then r0.
        cap_f = np.maximum(1.0 + sigma * rng.standard_normal((q, s)), 0.5)
        r0_f = np.maximum(1.0 + sigma * rng.standard_normal((q, s)), 0.0)
        self.capacity = cell.capacity_ah * cap_f
        self.r0 = cell.r0_ohm * r0_f
        self.cell = cell
        self.config = config
        self.branches = config.branches_per_module
        self.r_link = np.array(config.interconnect_ohm)
        self.soc = np.full((q, s), float(init_soc))
        self.v_rc = np.zeros((q, s))
        self.surf = np.full((q, s), float(init_soc))
        socs = np.array([p for p, _ in cell.ocv_knots])
        volts = np.array([v for _, v in cell.ocv_knots])
        self._ocv_socs = socs
        self._ocv_volts = volts

    def _ocv(self, surf: np.ndarray) -> np.ndarray:
        return np.interp(surf, self._ocv_socs, self._ocv_volts)

    def module_offsets(self):
        """Per-module zero-current voltage sum and effective resistance."""
        o = (self._ocv(self.surf) + self.v_rc).sum(axis=1)
        r_mod = self.r0.sum(axis=1) / self.branches
        return o, r_mod

    def split(self, i_pack: float):
        """Exact parallel-bus current split for a given pack current."""
        o, r_mod = self.module_offsets()
        r_tot = r_mod + self.r_link
        inv = 1.0 / r_tot
        v_bus = (i_pack + float(np.dot(o, inv))) / float(inv.sum())
        i_mod = (v_bus - o) * inv
        v_mod = o + i_mod * r_mod
        return v_bus, i_mod, v_mod

    def cv_current(self, setpoint: float) -> float:
        """Pack current that places the bus voltage at the setpoint."""
        o, r_mod = self.module_offsets()
        r_tot = r_mod + self.r_link
        return float(np.sum((setpoint - o) / r_tot))

    def advance(self, i_mod: np.ndarray, dt: float) -> None:
        """Advance every cell by dt at its branch current (exact updates)."""
        i_cell = (i_mod / self.branches)[:, None]
        d_soc = i_cell * dt / 3600.0 / self.capacity
        soc_new = np.clip(self.soc + d_soc, 0.0, 1.0)

        r1, c1 = self.cell.r1_ohm, self.cell.c1_f
        if r1 > 0.0:
            v_inf = i_cell * r1
            self.v_rc = v_inf + (self.v_rc - v_inf) * math.exp(-dt / (r1 * c1))
        else:
            self.v_rc = np.zeros_like(self.v_rc)

        tau_d = self.cell.diff_tau_s
        rate = d_soc / dt
        decay = math.exp(-dt / tau_d)
        self.surf = np.clip(
            (self.soc + d_soc) - rate * tau_d
            + (self.surf - self.soc + rate * tau_d) * decay, 0.0, 1.0)
        self.soc = soc_new


def run_cccv_pack(config: PackConfig, cell: CellParams, policy: CccvPolicy,
                  init_soc: float, noise: NoiseSpec = NoiseSpec(),
                  name: str = "") -> TelemetryTrace:
    """Simulate a CCCV charge of a pack, recorded at 1 Hz.

    CC applies ``c_rate * pack capacity`` until the bus voltage reaches the
    pack setpoint ``series_cells * policy.v_max``; CV then holds the bus at
    the setpoint until the pack current tapers to the cutoff C-rate.  The
    noise seed derives from (rng_seed, policy, init_soc) so that identical
    inputs reproduce byte-identical traces while distinct policies on the
    same pack get independent noise.
    """
    if not 0.0 <= init_soc < 1.0:
        raise ValueError("init_soc must be in [0, 1)")
    if float(cell.ocv(init_soc)) >= policy.v_max:
        raise ValueError(
            f"infeasible policy: OCV({init_soc}) >= v_max {policy.v_max}")

    model = _PackModel(config, cell, init_soc)
    setpoint = config.series_cells * policy.v_max
    i_cc = policy.c_rate * config.capacity_ah
    i_cut = policy.taper_cutoff_c * config.capacity_ah
    n_records = int(policy.duration_s) + 1
    sub_dt = 0.1
    phase = "cc"

    t_out = np.arange(n_records, dtype=float)
    i_out = np.empty(n_records)
    v_out = np.empty((n_records, config.q))
    im_out = np.empty((n_records, config.q))

    def pack_current(step: int) -> float:
        nonlocal phase
        if phase == "cc":
            v_bus, _, _ = model.split(i_cc)
            if v_bus >= setpoint:
                phase = "cv"
            else:
                return i_cc
        if phase == "cv":
            i_cv = model.cv_current(setpoint)
            if i_cv < -1e-9:
                raise SolverError("CV solve produced negative pack current", step)
            if not math.isfinite(i_cv):
                raise SolverError("CV solve diverged", step)
            i_cv = min(max(i_cv, 0.0), i_cc)
            if i_cv <= i_cut:
                phase = "rest"
            else:
                return i_cv
        return 0.0

    sub_step = 0
    for k in range(n_records):
        i_k = pack_current(sub_step)
        _, i_mod, v_mod = model.split(i_k)
        i_out[k] = i_k
        v_out[k] = v_mod
        im_out[k] = i_mod
        if k == n_records - 1:
            break
        for _ in range(10):
            i_sub = pack_current(sub_step)
            _, i_mod_sub, _ = model.split(i_sub)
            model.advance(i_mod_sub, sub_dt)
            sub_step += 1

    seed_key = [config.rng_seed, int(round(policy.c_rate * 1000)),
                int(round(init_soc * 1000)), int(policy.duration_s)]
    rng = np.random.default_rng(seed_key)
    z = rng.standard_normal((n_records, config.q))
    v_rec = v_out * (1.0 + noise.rel_sigma * z)
    return TelemetryTrace(
        t_s=t_out, i_pack_a=i_out, v_modules=_quantize(v_rec),
        i_modules=im_out, name=name)


# ---------------------------------------------------------------------------
# Canonical configurations
# ---------------------------------------------------------------------------

def default_cell() -> CellParams:
    return CellParams()


def _ladder(shares, r_nominal: float) -> tuple:
    # Interconnect values that realize the requested current shares when the
    # modules are otherwise identical: 1/(r_mod + r_link) proportional to the
    # share, anchored so the largest share gets zero link resistance.
    top = max(shares)
    return tuple(r_nominal * (top / s - 1.0) for s in shares)


def pack1_config(rng_seed: int = 77) -> PackConfig:
    """4 parallel modules, 5 branches each, 100 series cells (20p100s).

    The interconnect ladder leaves module 1 farthest from the charger bus,
    so nominal module voltages come out ascending in module index.
    """
    cell = default_cell()
    r_nom = 100 * cell.r0_ohm / 5
    return PackConfig(
        name="pack1", parallel_modules=4, branches_per_module=5,
        series_cells=100, capacity_ah=100.0, v_max_pack=424.0,
        heterogeneity_sigma=0.01, rng_seed=rng_seed,
        interconnect_ohm=_ladder((0.55, 1.12, 1.15, 1.18), r_nom))


def pack2_config(rng_seed: int = 54) -> PackConfig:
    """5 parallel modules, 5 branches each, 80 series cells (25p80s)."""
    cell = default_cell()
    r_nom = 80 * cell.r0_ohm / 5
    return PackConfig(
        name="pack2", parallel_modules=5, branches_per_module=5,
        series_cells=80, capacity_ah=125.0, v_max_pack=338.0,
        heterogeneity_sigma=0.01, rng_seed=rng_seed,
        interconnect_ohm=_ladder((0.60, 1.04, 1.10, 1.10, 1.16), r_nom))
