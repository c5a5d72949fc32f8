"""Pass/fail check records shared by integrity and solution validation."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: float
    threshold: float
    level: str = "error"  # "warning" checks never fail a report
    detail: str = ""


@dataclass
class Report:
    checks: list = field(default_factory=list)

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks if c.level != "warning")

    def failed(self) -> list:
        return [c for c in self.checks if not c.passed and c.level != "warning"]

    def warnings(self) -> list:
        return [c for c in self.checks if not c.passed and c.level == "warning"]

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def table(self) -> str:
        width = max((len(c.name) for c in self.checks), default=4)
        lines = [f"{'check':<{width}}  status   measured      threshold"]
        for c in self.checks:
            if c.passed:
                tag = "PASS"
            else:
                tag = "WARN" if c.level == "warning" else "FAIL"
            line = f"{c.name:<{width}}  {tag:<7}  {c.measured:<12.6g}  {c.threshold:.6g}"
            if c.detail:
                line += f"  {c.detail}"
            lines.append(line)
        lines.append(f"overall: {'PASS' if self.overall else 'FAIL'}")
        return "\n".join(lines)
