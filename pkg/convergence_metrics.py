import math
from typing import Any, Dict, List, Optional

import numpy as np
from sklearn.linear_model import LinearRegression

DECAY_COLUMNS = [
    "sup_c0_error",
    "sup_c1_error",
    "prod_target_gap",
    "lp_s2m_s2n",
    "hot1",
    "hot2",
    "hot3",
]


def fitted_rate(ks: List[int], values: List[float]) -> Optional[float]:
    """Geometric rate exp(slope) of log(value) against k, from the positive values only"""
    points = [(k, math.log(v)) for k, v in zip(ks, values) if v is not None and v > 0]
    if len(points) < 2:
        return None
    X = np.array([[k] for k, _ in points], dtype=float)
    y = np.array([logv for _, logv in points])
    model = LinearRegression().fit(X, y)
    return float(math.exp(model.coef_[0]))


def column_summary(ks: List[int], values: List[float]) -> Dict[str, Any]:
    """first, last, last/first, monotone (non-increasing) and fitted rate of one column"""
    first, last = values[0], values[-1]
    return {
        "first": first,
        "last": last,
        "ratio": last / first if first else None,
        "monotone": all(a >= b for a, b in zip(values, values[1:])),
        "fitted_rate": fitted_rate(ks, values),
    }


def decay_summary(report) -> Dict[str, Dict[str, Any]]:
    """Per-column decay statistics of a renormalization report"""
    if not report.records:
        return {}
    ks = report.column("k")
    return {name: column_summary(ks, report.column(name)) for name in DECAY_COLUMNS}


def landau_trend(report) -> str:
    # lambda_P^m sigma_P^2m sigma_Q^2n along the schedule
    values = report.column("lp_s2m_s2n")
    if len(values) < 2 or values[-1] == values[0]:
        return "flat"
    return "decreasing" if values[-1] < values[0] else "growing"
