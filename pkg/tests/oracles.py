"""Brute-force reference implementations used to check the fast paths.

Everything here is deliberately naive (double loops, dict grouping,
closed-form Newton steps) and shares no code with the package.
"""

import math

import numpy as np


def oracle_proper_scores(probs, labels):
    total_log, total_brier = 0.0, 0.0
    for i in range(len(labels)):
        total_log += -math.log(max(probs[i][labels[i]], 1e-15))
        for j in range(len(probs[i])):
            indicator = 1.0 if labels[i] == j else 0.0
            total_brier += (probs[i][j] - indicator) ** 2
    return total_log / len(labels), total_brier / len(labels)


def oracle_ece(probs, labels, bins, mode, class_index=None):
    n = len(labels)
    if class_index is None:
        conf = [max(row) for row in probs]
        hit = [int(np.argmax(row) == y) for row, y in zip(probs, labels)]
    else:
        conf = [row[class_index] for row in probs]
        hit = [int(y == class_index) for y in labels]
    groups = {}
    if mode == "equal_width":
        for i in range(n):
            b = min(int(conf[i] * bins), bins - 1)
            groups.setdefault(b, []).append(i)
    else:
        order = sorted(range(n), key=lambda i: conf[i])
        for b, members in enumerate(np.array_split(order, bins)):
            groups[b] = list(members)
    total = 0.0
    for members in groups.values():
        if not members:
            continue
        mean_conf = sum(conf[i] for i in members) / len(members)
        freq = sum(hit[i] for i in members) / len(members)
        total += len(members) / n * abs(freq - mean_conf)
    return total


def oracle_auc(scores, correct):
    err = [s for s, ok in zip(scores, correct) if not ok]
    good = [s for s, ok in zip(scores, correct) if ok]
    total = 0.0
    for e in err:
        for g in good:
            if e < g:
                total += 1.0
            elif e == g:
                total += 0.5
    return total / (len(err) * len(good))


def oracle_confusion(probs, labels, c):
    confusion = [[0] * c for _ in range(c)]
    for row, y in zip(probs, labels):
        confusion[y][int(np.argmax(row))] += 1
    return confusion


def platt_newton(x, t, lam1, lam2, iterations=80):
    """Exact Newton solve of the penalized two-parameter logistic fit."""
    a, b = 1.0, 0.0
    for _ in range(iterations):
        u = a * x + b
        s = 1.0 / (1.0 + np.exp(-u))
        ga = (s - t) @ x + 2 * lam1 * (a - 1)
        gb = (s - t).sum() + 2 * lam2 * b
        w = s * (1 - s)
        haa = (w * x * x).sum() + 2 * lam1
        hab = (w * x).sum()
        hbb = w.sum() + 2 * lam2
        det = haa * hbb - hab * hab
        da = (hbb * ga - hab * gb) / det
        db = (haa * gb - hab * ga) / det
        a, b = a - da, b - db
        if max(abs(da), abs(db)) < 1e-14:
            break
    return a, b
