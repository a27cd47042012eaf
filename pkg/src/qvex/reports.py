"""Certification report container shared by probes and the equilibrium checker."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional


@dataclass
class CertReport:
    """Outcome of a sampled or exact check.

    A failing report always carries either a witness or a named residual
    above tolerance; `vacuous` flags passes where no sample met the check's
    precondition (e.g. no feasible point beyond the coercivity radius).
    """

    verdict: bool
    residuals: dict = field(default_factory=dict)
    witness: Optional[Any] = None
    tolerance: float = 0.0
    samples_used: int = 0
    seed: int = 0
    vacuous: bool = False
    name: str = ""

    def __bool__(self) -> bool:
        return self.verdict

    def summary(self) -> str:
        tag = "pass" if self.verdict else "FAIL"
        if self.vacuous:
            tag = "pass (vacuous)"
        keys = ", ".join(f"{k}={v:.3e}" for k, v in self.residuals.items())
        return f"{self.name or 'check'}: {tag} [{keys}] (samples={self.samples_used}, seed={self.seed})"
