"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """A computation produced non-finite values or left its validity range."""


class ConfigError(ValueError):
    """Invalid experiment configuration; carries every violated field."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
