"""
Исключения движка оценки
Код статуса исключения совпадает с кодом выхода командной строки
"""


class EngineException(Exception):
    """Базовое исключение движка

    Parameters
    ----------
    status : int
        Код статуса, он же код выхода программы

    message : str
        Человекопонятное описание ошибки
    """
    def __init__(self, status: int, message: str, *args: object):
        self.status = status
        self.message = message
        super().__init__(*args)

    def __str__(self) -> str:
        return f"{self.status}: {self.message}"


class ConfigException(EngineException):
    """Ошибка файла настроек или входных параметров"""
    def __init__(self, message: str, *args: object):
        super().__init__(2, message, *args)


class ModelValidationError(ConfigException):
    """Нарушены инварианты модели

    Все нарушения собираются в список errors, каждое с именем поля
    """
    def __init__(self, errors: list[str], *args: object):
        self.errors = errors
        super().__init__("; ".join(errors), *args)


class NumericalException(EngineException):
    """Численный сбой: корень не найден, квадратура не сошлась и т.п."""
    def __init__(self, message: str, *args: object):
        super().__init__(3, message, *args)


class BracketError(NumericalException):
    """Не удалось найти смену знака до границы области"""


class PoleError(NumericalException):
    """Аргумент слишком близок к полюсу подынтегральной функции"""


class SingularPathError(NumericalException):
    """Траектория ОДУ подошла к особенности beta + B = 0"""


class QuadratureError(NumericalException):
    """Квадратура не сошлась"""


class InversionError(NumericalException):
    """Обращение производящей функции не набрало нужную массу"""


class DeadTrancheError(NumericalException):
    """Аннуитет транша нулевой: транш гарантированно списан"""


class ValidationFailed(EngineException):
    """Сверка аналитики с Монте-Карло не прошла"""
    def __init__(self, message: str, *args: object):
        super().__init__(4, message, *args)
