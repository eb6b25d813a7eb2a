from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from packages.submodular.oracles import ModularVector


@dataclass
class SolverReport:
    solution: ModularVector
    objective: float
    gap: float
    iterations: int
    milliseconds: float = 0.0
    converged: bool = True
    minor_iterations: int = 0
    history: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "solution": [float(x) for x in np.asarray(self.solution)],
            "objective": float(self.objective),
            "gap": float(self.gap),
            "iterations": int(self.iterations),
            "milliseconds": round(float(self.milliseconds), 3),
            "converged": bool(self.converged),
        }
