"""Exception types shared across the package."""


class ConfigError(Exception):
    """A scenario or parameter set violates a validation rule.

    The message always names the offending field and the rule it broke.
    """


class InfeasiblePower(Exception):
    """A commanded electric power exceeds what the equivalent circuit can deliver."""


class InfeasibleReference(Exception):
    """A per-battery power target has no equilibrium on the switching curve."""
