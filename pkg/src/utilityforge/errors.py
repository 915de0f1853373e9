"""Exception hierarchy shared by every engine module."""

from __future__ import annotations


class UtilityForgeError(Exception):
    """Base class for all library errors."""

    code = "error"

    def to_dict(self) -> dict:
        return {"error": self.code, "type": type(self).__name__, "message": str(self)}


class InvalidParameter(UtilityForgeError, ValueError):
    code = "invalid_parameter"


class NonConvergence(UtilityForgeError, ArithmeticError):
    code = "non_convergence"


class NonFinite(UtilityForgeError, ArithmeticError):
    code = "non_finite"


class NoBracket(UtilityForgeError, ValueError):
    code = "no_bracket"


class UndefinedHazard(UtilityForgeError, ValueError):
    code = "undefined_hazard"


class UndefinedAt(UtilityForgeError, ValueError):
    code = "undefined_at"


class DegenerateKernel(UtilityForgeError, ValueError):
    code = "degenerate_kernel"


class UnpricedTail(UtilityForgeError, ArithmeticError):
    code = "unpriced_tail"


class NonContinuousTarget(UtilityForgeError, ValueError):
    code = "non_continuous_target"


class BudgetOutOfRange(UtilityForgeError, ValueError):
    code = "budget_out_of_range"


class DomainMismatch(UtilityForgeError, ValueError):
    code = "domain_mismatch"


class NotEquiprobable(UtilityForgeError, ValueError):
    code = "not_equiprobable"


class NonStrictOrder(UtilityForgeError, ValueError):
    code = "non_strict_order"


class InfeasibleAllocation(UtilityForgeError, ValueError):
    code = "infeasible_allocation"


class ConfigError(UtilityForgeError, ValueError):
    code = "config_error"

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field

    def to_dict(self) -> dict:
        out = super().to_dict()
        if self.field is not None:
            out["field"] = self.field
        return out
