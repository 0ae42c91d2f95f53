"""Naive pure-Python reference implementations of the agreement metrics.

Written independently of the package (no numpy, straight loops over the
definitions) so the two can be cross-checked against each other.
"""

import math

K = 5


def naive_confusion(pred, gold):
    cm = [[0] * K for _ in range(K)]
    for p, g in zip(pred, gold):
        cm[g - 1][p - 1] += 1
    return cm


def naive_kw(pred, gold):
    n = len(pred)
    observed = [[0.0] * K for _ in range(K)]
    for p, g in zip(pred, gold):
        observed[g - 1][p - 1] += 1.0 / n
    row = [sum(observed[i][j] for j in range(K)) for i in range(K)]
    col = [sum(observed[i][j] for i in range(K)) for j in range(K)]
    num = 0.0
    den = 0.0
    for i in range(K):
        for j in range(K):
            w = (i - j) ** 2 / (K - 1) ** 2
            num += w * observed[i][j]
            den += w * row[i] * col[j]
    if den == 0.0:
        return 1.0 if num == 0.0 else 0.0
    return 1.0 - num / den


def naive_macro_precision(pred, gold):
    cm = naive_confusion(pred, gold)
    precisions = []
    for c in range(K):
        col = sum(cm[r][c] for r in range(K))
        precisions.append(cm[c][c] / col if col else 0.0)
    return sum(precisions) / K


def naive_macro_f1(pred, gold):
    cm = naive_confusion(pred, gold)
    f1s = []
    for c in range(K):
        col = sum(cm[r][c] for r in range(K))
        row = sum(cm[c][r] for r in range(K))
        prec = cm[c][c] / col if col else 0.0
        rec = cm[c][c] / row if row else 0.0
        f1s.append(2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return sum(f1s) / K


def naive_mae(pred, gold):
    return sum(abs(p - g) for p, g in zip(pred, gold)) / len(pred)


def naive_pearson(pred, gold):
    n = len(pred)
    mx = sum(pred) / n
    my = sum(gold) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(pred, gold))
    sxx = sum((x - mx) ** 2 for x in pred)
    syy = sum((y - my) ** 2 for y in gold)
    if sxx == 0.0 or syy == 0.0:
        return None
    return sxy / math.sqrt(sxx * syy)


def naive_cwa(outcomes):
    total = sum(c for _, c in outcomes)
    if total == 0.0:
        return None
    return sum(c for ok, c in outcomes if ok) / total
