from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class MaterialParams:
    """Isotropic hyperelastic material in SI units."""

    youngs_modulus: float
    poisson_ratio: float
    density: float

    def __post_init__(self):
        if not self.youngs_modulus > 0:
            raise ValueError("youngs_modulus must be positive")
        if not 0.0 < self.poisson_ratio < 0.5:
            raise ValueError("poisson_ratio must lie in (0, 0.5)")
        if not self.density > 0:
            raise ValueError("density must be positive")

    @property
    def lame_mu(self) -> float:
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def lame_lambda(self) -> float:
        nu = self.poisson_ratio
        return self.youngs_modulus * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))


# Measured gel used by the reference sensor.
GEL = MaterialParams(youngs_modulus=1.23e5, poisson_ratio=0.43, density=1.01e3)


@dataclass(frozen=True)
class ContactParams:
    """Barrier and friction settings; ``dhat`` is in metres."""

    dhat: float
    kappa: float = 1.0e6
    mu: float = 0.5
    epsv: float = 1.0e-3
    self_contact: bool = True
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.dhat > 0:
            raise ValueError("dhat must be positive")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if not self.mu >= 0:
            raise ValueError("mu must be non-negative")
        if not self.epsv > 0:
            raise ValueError("epsv must be positive")

    @classmethod
    def from_fraction(cls, fraction: float, diagonal: float, **kw) -> "ContactParams":
        """Resolve ``dhat`` as a fraction of the scene bounding-box diagonal."""
        return cls(dhat=fraction * diagonal, **kw)
