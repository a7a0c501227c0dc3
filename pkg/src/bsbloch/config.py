"""Declarative scenario configuration.

A scenario is a single TOML file: spectrum (explicit diagonal or a tensor
product of two orbital lists), model-space indices, a list of potential
terms, solver selection, and numeric options.  Everything is validated
referentially before any computation; validation failures carry the field
path that caused them.
"""

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .model import Orbital, model_space, spectrum_from_diagonal, tensor_h0
from .numerics import gauss_legendre
from .potential import (
    ConstantTerm,
    EnergyDependentPotential,
    PhotonKernel,
    PhotonTerm,
    Profile,
    RationalTerm,
)

SOLVERS = ("expand", "bw", "bsbloch", "verify", "sweep")
SWEEPABLES = ("coupling_scale", "gap_delta", "quadrature_n", "gamma")


@dataclass
class SolverSettings:
    """Numeric options shared by the pipelines (defaults are desk-scale)."""

    bracket: tuple = (-1.0, 1.0)
    branch: int = 0
    tolerance: float = 1e-12
    max_iterations: int = 5000
    mixing: float = 0.5
    gap_floor: float = 1e-6
    expansion_order: int = 3
    msc_mode: str = "auto"
    scan_range: tuple = None  # type: ignore[assignment]
    scan_points: int = 201
    oracle: bool = True


@dataclass
class ScenarioConfig:
    """Parsed and validated scenario description."""

    scenario_id: str
    solver: str
    seed: int = 20240
    h0: list = None  # type: ignore[assignment]
    tensor_first: list = None  # type: ignore[assignment]
    tensor_second: list = None  # type: ignore[assignment]
    signs_first: list = None  # type: ignore[assignment]
    signs_second: list = None  # type: ignore[assignment]
    positive_energy_projection: bool = False
    model_indices: list = field(default_factory=list)
    terms: list = field(default_factory=list)
    settings: SolverSettings = field(default_factory=SolverSettings)
    sweep_parameter: str = None  # type: ignore[assignment]
    sweep_values: list = None  # type: ignore[assignment]
    output_dir: str = "out"
    config_hash: str = ""

    @classmethod
    def from_file(cls, path):
        with open(path, "rb") as fh:
            raw = fh.read()
        digest = hashlib.sha256(raw).hexdigest()
        try:
            data = tomllib.loads(raw.decode("utf-8"))
        except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        return cls.from_dict(data, config_hash=digest)

    @classmethod
    def from_dict(cls, data, config_hash=""):
        scenario = data.get("scenario", {})
        spectrum = data.get("spectrum", {})
        tensor = spectrum.get("tensor", {})
        opts = data.get("solver_opts", {})
        sweep = data.get("sweep", {})
        output = data.get("output", {})

        settings = SolverSettings()
        known = set(vars(settings))
        for key, value in opts.items():
            if key not in known:
                raise ConfigError(f"solver_opts.{key}: unknown option")
            if key in ("bracket", "scan_range"):
                value = tuple(value)
            setattr(settings, key, value)

        cfg = cls(
            scenario_id=str(scenario.get("id", "scenario")),
            solver=scenario.get("solver", "bw"),
            seed=int(scenario.get("seed", 20240)),
            h0=spectrum.get("h0"),
            tensor_first=tensor.get("energies_first"),
            tensor_second=tensor.get("energies_second"),
            signs_first=tensor.get("signs_first"),
            signs_second=tensor.get("signs_second"),
            positive_energy_projection=bool(
                scenario.get("positive_energy_projection", False)),
            model_indices=list(data.get("model_space", {}).get("indices", [])),
            terms=[dict(t) for t in data.get("potential", [])],
            settings=settings,
            sweep_parameter=sweep.get("parameter"),
            sweep_values=list(sweep["values"]) if "values" in sweep else None,
            output_dir=str(output.get("dir", "out")),
            config_hash=config_hash,
        )
        cfg.validate()
        return cfg

    # -- validation -------------------------------------------------------

    def basis_size(self):
        if self.h0 is not None:
            return len(self.h0)
        return len(self.tensor_first) * len(self.tensor_second)

    def validate(self):
        if self.solver not in SOLVERS:
            raise ConfigError(f"scenario.solver: {self.solver!r} not in {SOLVERS}")
        has_diag = self.h0 is not None
        has_tensor = self.tensor_first is not None or self.tensor_second is not None
        if has_diag == has_tensor:
            raise ConfigError(
                "spectrum: give exactly one of spectrum.h0 or spectrum.tensor")
        if has_tensor:
            if not self.tensor_first or not self.tensor_second:
                raise ConfigError("spectrum.tensor: both orbital lists must be nonempty")
            for name, signs, energies in (
                ("signs_first", self.signs_first, self.tensor_first),
                ("signs_second", self.signs_second, self.tensor_second),
            ):
                if signs is not None:
                    if len(signs) != len(energies):
                        raise ConfigError(
                            f"spectrum.tensor.{name}: length {len(signs)} does not "
                            f"match {len(energies)} energies")
                    for i, s in enumerate(signs):
                        if s not in (1, -1):
                            raise ConfigError(
                                f"spectrum.tensor.{name}[{i}]: sign must be +1/-1")
        else:
            if len(self.h0) == 0:
                raise ConfigError("spectrum.h0: must be nonempty")

        n = self.basis_size()
        if not self.model_indices:
            raise ConfigError("model_space.indices: must be nonempty")
        seen = set()
        for i, idx in enumerate(self.model_indices):
            if not isinstance(idx, int) or not 0 <= idx < n:
                raise ConfigError(
                    f"model_space.indices[{i}]: {idx} outside basis [0, {n})")
            if idx in seen:
                raise ConfigError(f"model_space.indices[{i}]: duplicate index {idx}")
            seen.add(idx)

        for t, term in enumerate(self.terms):
            kind = term.get("kind")
            if kind not in ("constant", "rational", "photon"):
                raise ConfigError(f"potential[{t}].kind: unknown kind {kind!r}")
            matrix = term.get("matrix")
            if matrix is None:
                raise ConfigError(f"potential[{t}].matrix: required")
            arr = np.asarray(matrix, dtype=float)
            if arr.ndim != 2 or arr.shape != (n, n):
                raise ConfigError(
                    f"potential[{t}].matrix: shape {arr.shape} must be ({n}, {n})")
            if kind == "rational":
                if "pole" not in term:
                    raise ConfigError(f"potential[{t}].pole: required for rational terms")
                if int(term.get("power", 1)) < 1:
                    raise ConfigError(f"potential[{t}].power: must be >= 1")
            if kind == "photon":
                if not has_tensor:
                    raise ConfigError(
                        f"potential[{t}]: photon terms need spectrum.tensor "
                        f"(orbital pair data)")
                gamma = float(term.get("gamma", 0.0))
                if gamma < 0:
                    raise ConfigError(f"potential[{t}].gamma: must be >= 0")
                if gamma > 0 and self.solver in ("bw", "bsbloch"):
                    raise ConfigError(
                        f"potential[{t}].gamma: damped kernels make the "
                        f"energies complex; the {self.solver} solver needs "
                        f"gamma = 0 (use solver = \"expand\")")
                qn = int(term.get("quadrature_n", 20))
                kmin = float(term.get("quadrature_kmin", 0.0))
                kmax = float(term.get("quadrature_kmax", 1.0))
                if qn < 1:
                    raise ConfigError(f"potential[{t}].quadrature_n: must be >= 1")
                if not kmax > kmin:
                    raise ConfigError(
                        f"potential[{t}]: quadrature range [{kmin}, {kmax}] is empty")
                prof = term.get("profile", "constant")
                if prof not in ("constant", "gaussian", "lorentzian"):
                    raise ConfigError(f"potential[{t}].profile: unknown profile {prof!r}")

        lo, hi = self.settings.bracket
        if not hi > lo:
            raise ConfigError(f"solver_opts.bracket: [{lo}, {hi}] must be increasing")
        if self.settings.scan_range is not None:
            lo, hi = self.settings.scan_range
            if not hi > lo:
                raise ConfigError(
                    f"solver_opts.scan_range: [{lo}, {hi}] must be increasing")
        if not 0.0 < self.settings.mixing <= 1.0:
            raise ConfigError(
                f"solver_opts.mixing: {self.settings.mixing} outside (0, 1]")
        if self.settings.msc_mode not in ("auto", "derivative"):
            raise ConfigError(
                f"solver_opts.msc_mode: {self.settings.msc_mode!r} not auto/derivative")
        if not 1 <= self.settings.expansion_order <= 3:
            raise ConfigError(
                f"solver_opts.expansion_order: {self.settings.expansion_order} not in 1..3")
        if self.solver == "sweep" or self.sweep_parameter is not None:
            if self.sweep_parameter not in SWEEPABLES:
                raise ConfigError(
                    f"sweep.parameter: {self.sweep_parameter!r} not in {SWEEPABLES}")
            if self.sweep_values is None:
                raise ConfigError("sweep.values: required when sweeping")
            if self.sweep_parameter == "gap_delta" and self.h0 is None:
                raise ConfigError(
                    "sweep.parameter: gap_delta needs an explicit spectrum.h0")

    # -- builders ---------------------------------------------------------

    def build_spectrum(self):
        if self.h0 is not None:
            return spectrum_from_diagonal(np.asarray(self.h0, dtype=float))
        first = [
            Orbital(i, float(e),
                    None if self.signs_first is None else int(self.signs_first[i]))
            for i, e in enumerate(self.tensor_first)
        ]
        second = [
            Orbital(i, float(e),
                    None if self.signs_second is None else int(self.signs_second[i]))
            for i, e in enumerate(self.tensor_second)
        ]
        return tensor_h0(first, second)

    def build_potential(self, spectrum):
        built = []
        projector = None
        if self.positive_energy_projection:
            if spectrum.orbital_pairs is None:
                raise ConfigError(
                    "scenario.positive_energy_projection needs spectrum.tensor")
            keep = np.array([1.0 if (a.sign > 0 and b.sign > 0) else 0.0
                             for a, b in spectrum.orbital_pairs])
            projector = np.outer(keep, keep)
        for term in self.terms:
            w = np.asarray(term["matrix"], dtype=float)
            if projector is not None:
                w = w * projector
            kind = term["kind"]
            if kind == "constant":
                built.append(ConstantTerm(w))
            elif kind == "rational":
                built.append(RationalTerm(w, float(term["pole"]), int(term.get("power", 1))))
            else:
                grid = gauss_legendre(int(term.get("quadrature_n", 20)),
                                      float(term.get("quadrature_kmin", 0.0)),
                                      float(term.get("quadrature_kmax", 1.0)))
                profile = Profile(
                    name=term.get("profile", "constant"),
                    scale=float(term.get("profile_scale", 1.0)),
                    center=float(term.get("profile_center", 0.0)),
                    width=float(term.get("profile_width", 1.0)),
                )
                built.append(PhotonTerm(PhotonKernel.from_spectrum(
                    spectrum, grid, w, profile=profile,
                    gamma=float(term.get("gamma", 0.0)))))
        if not built:
            n = spectrum.size
            built.append(ConstantTerm(np.zeros((n, n))))
        return EnergyDependentPotential(tuple(built))

    def build(self):
        """Materialize (spectrum, model space, potential)."""
        spectrum = self.build_spectrum()
        pspace = model_space(spectrum, self.model_indices)
        potential = self.build_potential(spectrum)
        return spectrum, pspace, potential

    # -- sweep derivation -------------------------------------------------

    def swept(self, parameter, value, row_index):
        """A copy of this config with one sweepable parameter applied and a
        per-row seed derived from the base seed."""
        cfg = replace(
            self,
            terms=[dict(t) for t in self.terms],
            model_indices=list(self.model_indices),
            h0=list(self.h0) if self.h0 is not None else None,
            seed=self.seed + row_index,
            sweep_parameter=None,
            sweep_values=None,
            solver=self.solver if self.solver != "sweep" else "bw",
        )
        if parameter == "coupling_scale":
            for term in cfg.terms:
                arr = np.asarray(term["matrix"], dtype=float) * float(value)
                term["matrix"] = arr.tolist()
        elif parameter == "gap_delta":
            base = cfg.h0[cfg.model_indices[0]]
            for k, idx in enumerate(cfg.model_indices[1:], start=1):
                cfg.h0[idx] = base + k * float(value)
        elif parameter == "quadrature_n":
            for term in cfg.terms:
                if term["kind"] == "photon":
                    term["quadrature_n"] = int(value)
        elif parameter == "gamma":
            for term in cfg.terms:
                if term["kind"] == "photon":
                    term["gamma"] = float(value)
        else:
            raise ConfigError(f"sweep.parameter: {parameter!r} not in {SWEEPABLES}")
        cfg.validate()
        return cfg
