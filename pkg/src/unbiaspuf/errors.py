"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration violates its invariants."""


class ContractError(ValueError):
    """An operation was called outside its precondition."""


class SaturationError(ArithmeticError):
    """The bin_0 mass is numerically zero, so A1/A0 cannot be formed."""

    def __init__(self, a1, a0):
        self.a1 = a1
        self.a0 = a0
        # A0 is below the saturation floor, so the true ratio is at least this
        self.lower_bound = a1 / max(a0, 1e-15)
        super().__init__(f"ratio saturated: A1={a1!r}, A0={a0!r}")


class NoFeasibleBitError(RuntimeError):
    """No inspection bit meets the intra-FHD threshold."""


class StrictOverflowError(RuntimeError):
    """Strict overflow mode was requested and at least one cell overflowed."""
