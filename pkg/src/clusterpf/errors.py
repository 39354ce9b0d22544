"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside an operation's stated domain."""


class AdjacencyError(ValueError):
    """An adjacency matrix or its file representation is malformed."""


class DatasetError(ValueError):
    """A persisted dataset cannot be parsed or is inconsistent."""


class ConfigError(ValueError):
    """A scenario or CLI configuration is invalid."""


class DegeneracyError(RuntimeError):
    """Every particle weight in one cluster vanished."""

    def __init__(self, cluster_index: int, time_index: int):
        super().__init__(
            f"all particle weights vanished in cluster {cluster_index} "
            f"at time {time_index}"
        )
        self.cluster_index = cluster_index
        self.time_index = time_index


class SingularPrecisionError(ArithmeticError):
    """A spatial precision matrix is not positive definite."""
