try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        """Аналог enum.StrEnum из Python 3.11"""
        __str__ = str.__str__
        __format__ = str.__format__

        @staticmethod
        def _generate_next_value_(name, start, count, last_values):
            return name.lower()


class TimeUnit(StrEnum):
    """
    Единица времени, в которой заданы параметры интенсивности
    Внутренняя единица движка: квартал
    """
    QUARTER = "quarter"
    YEAR = "year"

    @property
    def per_year(self) -> int:
        """Сколько таких единиц в году"""
        return 4 if self is TimeUnit.QUARTER else 1


class ComparisonMode(StrEnum):
    """
    Модель процесса событий при оценке траншей
    """
    DYNAMIC_CONTAGION = "dynamic_contagion"
    POISSON = "poisson"
    AJD_NO_SELF = "ajd_no_self"

    @classmethod
    def parse(cls, value: "str|ComparisonMode") -> "ComparisonMode":
        """Разбор значения с поддержкой короткого имени dynamic"""
        if isinstance(value, ComparisonMode):
            return value
        if value == "dynamic":
            return cls.DYNAMIC_CONTAGION
        return cls(value)


class SimScheme(StrEnum):
    """
    Схема дискретизации в симуляторе
    """
    EULER_BERNOULLI = "euler_bernoulli"
    EULER_POISSON_STEP = "euler_poisson_step"


class FloorPolicy(StrEnum):
    """
    Обработка отрицательной интенсивности
    Частота событий всегда берётся как max(lambda, 0);
    при CLIP_ZERO_RATE обрезается и сама траектория lambda
    """
    REFLECT_ZERO_RATE = "reflect_zero_rate"
    CLIP_ZERO_RATE = "clip_zero_rate"


class BMethod(StrEnum):
    """
    Способ вычисления B(t)
    """
    CLOSED_FORM = "closed_form"
    ODE = "ode"
