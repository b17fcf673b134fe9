def mean(values):
    if not values:
        return 0.0
    return sum(values) / len(values)


def scale(values, factor):
    return [v * factor for v in values]
