"""Exceptions shared across modules."""


class BudgetError(ValueError):
    """A configured size guard was exceeded; ``guard`` names it."""

    def __init__(self, guard: str, message: str):
        super().__init__(f"[{guard}] {message}")
        self.guard = guard
