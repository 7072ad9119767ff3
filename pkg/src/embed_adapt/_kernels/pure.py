"""Pure NumPy implementation of the skip-gram negative-sampling inner loop.

Mirrors the compiled kernel draw-for-draw: both backends consume the same
linear-congruential random stream, so subsampling decisions, window widths,
and negative draws are identical whichever backend is active.  Floating
point accumulation order may differ between backends, so trained vectors
agree statistically rather than bitwise across backends; a single backend
is bitwise reproducible.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

_MASK64 = (1 << 64) - 1
_LCG_MULT = 25214903917
_LCG_ADD = 11
_MAX_EXP = 30.0  # dot products are clamped to +-30 before exp()


def draw_negatives(cum_table: np.ndarray, n: int, state: int
                   ) -> tuple[np.ndarray, int]:
    """Draw n indices from the cumulative noise table; returns (ids, state)."""
    domain = int(cum_table[-1])
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        state = (state * _LCG_MULT + _LCG_ADD) & _MASK64
        t = ((state >> 16) & 0x7FFFFFFF) % domain
        out[i] = np.searchsorted(cum_table, t, side="right")
    return out, state


def train_batch(vin, vout, tokens, offsets, keep_prob, subsample, cum_table,
                window, negative, lr0, lr_min, words_done, total_words,
                reg_lambda, phi, pre, pre_mask, state):
    """Run SGD over one batch of sentences; updates vin/vout in place.

    Returns (state, words_done, pairs, loss_sum): the advanced RNG state,
    the token progress counter (drives the learning-rate decay), the number
    of (center, context) steps taken, and the summed per-pair loss.
    """
    domain = int(cum_table[-1])
    loss_sum = 0.0
    pairs = 0
    for s in range(len(offsets) - 1):
        raw = tokens[offsets[s]:offsets[s + 1]]
        sen = []
        for w in raw:
            w = int(w)
            words_done += 1
            if subsample:
                state = (state * _LCG_MULT + _LCG_ADD) & _MASK64
                r16 = (state >> 16) & 0xFFFF
                if keep_prob[w] < r16 / 65536.0:
                    continue
            sen.append(w)
        slen = len(sen)
        for pos in range(slen):
            c = sen[pos]
            lr = lr0 * (1.0 - words_done / (total_words + 1.0))
            if lr < lr_min:
                lr = lr_min
            state = (state * _LCG_MULT + _LCG_ADD) & _MASK64
            win = 1 + ((state >> 16) & 0x7FFFFFFF) % window
            lo = pos - win if pos - win > 0 else 0
            hi = pos + win + 1 if pos + win + 1 < slen else slen
            vc = vin[c]
            for cpos in range(lo, hi):
                if cpos == pos:
                    continue
                ctx = sen[cpos]
                neu = np.zeros_like(vc)
                loss = 0.0
                # positive example
                f = float(vc @ vout[ctx])
                f = min(max(f, -_MAX_EXP), _MAX_EXP)
                sig = 1.0 / (1.0 + math.exp(-f))
                loss -= math.log(sig)
                g = sig - 1.0
                neu += g * vout[ctx]
                vout[ctx] -= (lr * g) * vc
                # negative samples (a draw colliding with the positive
                # context is consumed but not trained on)
                for _ in range(negative):
                    state = (state * _LCG_MULT + _LCG_ADD) & _MASK64
                    t = ((state >> 16) & 0x7FFFFFFF) % domain
                    neg = int(np.searchsorted(cum_table, t, side="right"))
                    if neg == ctx:
                        continue
                    f = float(vc @ vout[neg])
                    f = min(max(f, -_MAX_EXP), _MAX_EXP)
                    sig_neg = 1.0 / (1.0 + math.exp(f))  # sigmoid(-f)
                    loss -= math.log(sig_neg)
                    g = 1.0 - sig_neg
                    neu += g * vout[neg]
                    vout[neg] -= (lr * g) * vc
                if reg_lambda > 0.0 and pre_mask[c]:
                    diff = vc - pre[c]
                    loss += reg_lambda * phi[c] * float(diff @ diff)
                    neu += (2.0 * reg_lambda * phi[c]) * diff
                vc -= lr * neu
                loss_sum += loss
                pairs += 1
    return state, words_done, pairs, loss_sum
