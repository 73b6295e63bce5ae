"""Independent reference implementations used to check the library.

Everything here is written with plain Python loops and scalar math on
purpose: these oracles must not share code paths with the implementations
they verify.
"""

from __future__ import annotations

import math

import numpy as np


def loop_input_embedding(unigram_table, bigram_table, uni_ids, bi_ids, token_count):
    d = unigram_table.shape[1]
    total = [0.0] * d
    for i in uni_ids:
        for k in range(d):
            total[k] += float(unigram_table[i, k])
    for i in bi_ids:
        for k in range(d):
            total[k] += float(bigram_table[i, k])
    scale = 1.0 / math.sqrt(token_count)
    return np.array([v * scale for v in total])


def loop_forward(psi, weights, biases, hidden_dims, residual_skip=1):
    """Scalar-loop dense stack with ReLU on all but the last layer and
    residual adds from layer i-(skip+1) onto layer i where widths match."""
    outputs = []
    x = [float(v) for v in psi]
    last = len(hidden_dims) - 1
    for i, (w, b) in enumerate(zip(weights, biases)):
        h = []
        for j in range(w.shape[1]):
            acc = float(b[j])
            for k in range(w.shape[0]):
                acc += x[k] * float(w[k, j])
            if i < last and acc < 0:
                acc = 0.0
            h.append(acc)
        src = i - (residual_skip + 1)
        if src >= 0 and hidden_dims[src] == hidden_dims[i]:
            h = [a + b2 for a, b2 in zip(h, outputs[src])]
        outputs.append(h)
        x = h
    return np.array(x)


def loop_softmax_cross_entropy(scores):
    """Mean over rows of -log softmax probability of the diagonal entry."""
    k = len(scores)
    total = 0.0
    for i in range(k):
        row = [float(v) for v in scores[i]]
        m = max(row)
        z = sum(math.exp(v - m) for v in row)
        total += -(row[i] - m - math.log(z))
    return total / k


def loop_balanced_bce(u_batch, scores, head, dropout_mask=None):
    """Class-balanced sigmoid BCE over a square in-batch score matrix."""
    k = len(scores)
    total = 0.0
    wsum = 0.0
    for i in range(k):
        feats = [float(v) for v in u_batch[i]] + [float(v) ** 2 for v in u_batch[i]]
        if dropout_mask is not None:
            feats = [
                f * float(m) / (1.0 - head.dropout_rate)
                for f, m in zip(feats, dropout_mask[i])
            ]
        scale = float(head.scale_bias[0]) + sum(
            f * float(w) for f, w in zip(feats, head.scale_weights)
        )
        shift = float(head.shift_bias[0]) + sum(
            f * float(w) for f, w in zip(feats, head.shift_weights)
        )
        for j in range(k):
            z = scale * float(scores[i][j]) + shift
            y = 1.0 if i == j else 0.0
            weight = (k - 1.0) if i == j else 1.0
            bce = max(z, 0.0) - z * y + math.log1p(math.exp(-abs(z)))
            total += weight * bce
            wsum += weight
    return total / wsum


def loop_top_n(vectors, ids, query, n):
    """Exhaustive max-dot top-n with ties broken by ascending id."""
    scored = []
    for vec, vid in zip(vectors, ids):
        s = sum(float(a) * float(b) for a, b in zip(vec, query))
        scored.append((vid, s))
    scored.sort(key=lambda t: (-t[1], t[0]))
    return scored[:n]


def brute_force_doc_score(entries, source_positions, target_positions, w1, w2):
    """Direct evaluation of the rank/confidence/offset sum.

    `entries` are (source_id, target_id, rank, confidence) tuples; targets
    missing from `target_positions` contribute nothing.
    """
    total = 0.0
    for source_id, target_id, rank, confidence in entries:
        if target_id not in target_positions:
            continue
        delta = abs(source_positions[source_id] - target_positions[target_id])
        total += -rank + w1 * confidence + w2 * delta
    return total


def exhaustive_monotone_alignment(weights):
    """Maximum-total-weight strictly monotone 1-1 alignment by enumeration."""
    m, n = len(weights), len(weights[0])

    best = [None]

    def recurse(i, j, chosen, total):
        if best[0] is None or total > best[0][0]:
            best[0] = (total, list(chosen))
        if i >= m or j >= n:
            return
        for ii in range(i, m):
            for jj in range(j, n):
                chosen.append((ii, jj))
                recurse(ii + 1, jj + 1, chosen, total + float(weights[ii][jj]))
                chosen.pop()

    recurse(0, 0, [], 0.0)
    return best[0]


def rank_auc(positive, negative):
    """Mann-Whitney AUC of positive scores over negative scores."""
    values = list(positive) + list(negative)
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = avg
        i = j + 1
    pos_rank_sum = sum(ranks[: len(positive)])
    n_pos, n_neg = len(positive), len(negative)
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def finite_difference(f, param, eps=1e-4):
    """Central finite differences of scalar f() w.r.t. every entry of param."""
    grad = np.zeros_like(param, dtype=np.float64)
    it = np.nditer(param, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = param[idx]
        param[idx] = orig + eps
        hi = f()
        param[idx] = orig - eps
        lo = f()
        param[idx] = orig
        grad[idx] = (hi - lo) / (2 * eps)
        it.iternext()
    return grad


def max_relative_error(analytic, numeric, floor=1e-6):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))
