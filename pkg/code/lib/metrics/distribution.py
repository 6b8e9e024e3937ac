""" Top-k and CDF tables comparing the real and the generated values of a header
field."""

from collections import Counter

import numpy as np
import pandas as pd

from ..errors import EmptyList

def as_number(value):
    try:
        return float(value)
    except (TypeError, ValueError):
        return None

def sort_values(values):
    """Numeric order when every value is a number, string order otherwise."""

    values = list(values)
    if all(as_number(v) is not None for v in values):
        return sorted(values, key=lambda v: (as_number(v), str(v)))
    return sorted(values, key=str)

def topk_table(real, generated, k=5):
    """The k most frequent real values with their real and generated frequencies."""

    real_counts, gen_counts = Counter(real), Counter(generated)
    ranked = sorted(real_counts.items(), key=lambda item: (-item[1], str(item[0])))[:k]
    return pd.DataFrame({"value": [v for v, _ in ranked],
                         "real_freq": [c / len(real) for _, c in ranked],
                         "generated_freq": [gen_counts.get(v, 0) / len(generated) for v, _ in ranked]})

def cdf_table(real, generated):
    """Empirical CDFs of both samples on the sorted union of their values."""

    support = sort_values(set(real) | set(generated))
    real_counts, gen_counts = Counter(real), Counter(generated)
    real_cdf = np.cumsum([real_counts.get(v, 0) for v in support]) / len(real)
    gen_cdf = np.cumsum([gen_counts.get(v, 0) for v in support]) / len(generated)
    return pd.DataFrame({"value": support, "real_cdf": real_cdf, "generated_cdf": gen_cdf})

def distribution_report(real, generated, k=5):
    if len(real) == 0 or len(generated) == 0:
        raise EmptyList("Both the real and the generated samples must be non-empty.")
    return topk_table(real, generated, k), cdf_table(real, generated)
