from decimal import ROUND_HALF_UP, Decimal


class IdGenerator:
    '''
    Monotonic request ids, unique within the process. Ids only label log lines and errors;
    they never feed into generated content.
    '''
    instance = None
    @staticmethod
    def generate_id():
        if IdGenerator.instance is None:
            IdGenerator.instance = IdGenerator()
        return IdGenerator.instance()
    def __init__(self, prefix: str = 'req'):
        self._id = 0
        self._prefix = prefix
    def __call__(self):
        self._id += 1
        return f'{self._prefix}_{self._id}'


def half_up(value: float, places: int = 2) -> float:
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))
