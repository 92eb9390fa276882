"""Hierarquia de exceções do toolkit."""


class DyGCLError(Exception):
    """Erro base; a CLI converte em código de saída."""

    exit_code = 1


class DimensionError(DyGCLError):
    """Formatos de matriz incompatíveis."""


class NumericError(DyGCLError):
    """NaN/Inf, norma nula ou probabilidade fora de (0, 1)."""


class StructuralError(DyGCLError):
    """Índice fora do intervalo ou estrutura de grafo inválida."""


class ConfigError(DyGCLError):
    exit_code = 2


class UsageError(DyGCLError):
    exit_code = 2


class ParseError(DyGCLError):
    """Falha de leitura de arquivo; guarda linha e campo."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"linha {line}")
        if field is not None:
            where.append(f"campo '{field}'")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class TrainingDivergedError(NumericError):
    def __init__(self, message: str, epoch: int, batch: int | None = None):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"{message} [época {epoch}, lote {batch}]")
