"""Exception hierarchy shared by every module."""


class GameError(Exception):
    """Base class for all engine errors."""


class ShapeError(GameError, ValueError):
    """A profile or vector does not match the game's participant layout."""


class SimplexError(GameError, ValueError):
    """A vector is not a valid point of a probability simplex."""


class EvaluationError(GameError, ArithmeticError):
    """The evaluation function produced a non-finite value."""


class ConfigurationError(GameError):
    """An operation needs game data that is missing (e.g. a potential block)."""


class DomainError(GameError, ValueError):
    """A function was evaluated outside its domain of definition."""


class CombinatorialLimitError(GameError):
    """Enumerating pure profiles would exceed the configured cap."""

    def __init__(self, count, cap):
        super().__init__(f"{count} pure profiles exceeds the cap of {cap}")
        self.count = count
        self.cap = cap


class SpecError(GameError, ValueError):
    """A cg-spec document failed validation.

    ``where`` is a field path such as ``participants[1].weight``.
    """

    def __init__(self, where, message):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where
