from __future__ import annotations

from dataclasses import dataclass, field

from .coeffs import DampingModel, PerturbationModel
from .nonlinearity import NonlinearityModel


@dataclass(frozen=True)
class Model:
    """Everything that defines the equation, independent of discretization."""

    n: int
    damping: DampingModel
    pert: PerturbationModel = field(default_factory=PerturbationModel)
    nl: NonlinearityModel | None = None

    def __post_init__(self):
        if self.nl is None:
            object.__setattr__(self, "nl", NonlinearityModel(n=self.n))
        if self.pert.has_c and len(self.pert.c_amp) != self.n:
            raise ValueError(f"c_amp must have {self.n} components, got {len(self.pert.c_amp)}")

    @property
    def is_linear(self) -> bool:
        return self.nl.is_linear

    @property
    def is_unperturbed(self) -> bool:
        return self.nl.is_linear and not self.pert.has_c and not self.pert.has_d
