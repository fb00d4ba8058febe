class InvalidFieldError(ValueError):
    pass


class SymmetryError(ValueError):
    pass


class BlowUpError(FloatingPointError):
    """Integration produced a non-finite or runaway state."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"solution blew up at step {step}")


class GuardError(ValueError):
    """A size or configuration guard was violated."""
