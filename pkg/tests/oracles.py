"""Slow, obviously-correct reference implementations used as test oracles."""

import itertools
import math

import numpy as np


def brute_force_images(dims, src, rcv, betas, max_order, fs=48000, c=343.0):
    """Every image with at most ``max_order`` reflections, by direct enumeration.

    Returns a dict ``(nx, ny, nz, px, py, pz) -> (delay_samples, amplitude)``.
    """
    out = {}
    span = range(-max_order, max_order + 1)
    for nx, ny, nz in itertools.product(span, span, span):
        for px, py, pz in itertools.product((0, 1), repeat=3):
            n, p = (nx, ny, nz), (px, py, pz)
            hits = [(abs(n[a] - p[a]), abs(n[a])) for a in range(3)]
            if sum(lo + hi for lo, hi in hits) > max_order:
                continue
            pos = [(1 - 2 * p[a]) * src[a] + 2 * n[a] * dims[a] for a in range(3)]
            d = math.dist(pos, rcv)
            gain = 1.0
            for a in range(3):
                gain *= betas[2 * a] ** hits[a][0] * betas[2 * a + 1] ** hits[a][1]
            out[(nx, ny, nz, px, py, pz)] = (round(fs * d / c), gain / (4 * math.pi * d))
    return out


def impulse_train(images, length):
    h = np.zeros(length)
    for delay, amp in images.values():
        if delay < length:
            h[delay] += amp
    return h


def irm_scalar(x2, n2):
    if x2 + n2 == 0:
        return 0.0
    return math.sqrt(x2 / (x2 + n2))


def ibm_scalar(x2, n2, overall_db, rel_db=-6.0):
    if n2 == 0:
        local = math.inf
    elif x2 == 0:
        local = -math.inf
    else:
        local = 10 * math.log10(float(x2) / float(n2))
    return 1.0 if local >= overall_db + rel_db else 0.0


def lcs(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            table[i + 1][j + 1] = table[i][j] + 1 if x == y else max(table[i][j + 1], table[i + 1][j])
    return table[-1][-1]


def rau_direct(x, n):
    theta = math.asin(math.sqrt(x / (n + 1))) + math.asin(math.sqrt((x + 1) / (n + 1)))
    return 146 / math.pi * theta - 23


def decaying_noise_rir(rt60, fs=16000, seconds=None, seed=0):
    seconds = seconds or 1.5 * rt60
    t = np.arange(int(seconds * fs)) / fs
    tau = rt60 / (6 * math.log(10))  # energy e^(-t/tau) falls 60 dB in rt60
    rng = np.random.default_rng(seed)
    return np.exp(-t / (2 * tau)) * rng.standard_normal(t.size)


def sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def scalar_lstm_window(params, xs):
    """1-unit, 1-input LSTM from zero state over ``xs``; returns the output unit."""
    W, U, b = params["lstm0.W"][:, 0], params["lstm0.U"][:, 0], params["lstm0.b"]
    h = c = 0.0
    for x in xs:
        z = [W[k] * x + U[k] * h + b[k] for k in range(4)]
        i, f, g, o = sigmoid(z[0]), sigmoid(z[1]), math.tanh(z[2]), sigmoid(z[3])
        c = f * c + i * g
        h = o * math.tanh(c)
    return sigmoid(params["out.W"][0, 0] * h + params["out.b"][0])


def finite_difference_errors(model, items, loss_fn, grads, n_probes, rng, h=1e-5):
    """Relative errors of analytic ``grads`` against central differences at random entries."""
    names = model.param_names()
    sizes = np.array([model.params[n].size for n in names])
    errors = []
    for k in range(n_probes):
        # cycle tensors so every one is probed, then pick an entry at random
        name = names[k % len(names)]
        flat = model.params[name].reshape(-1)
        j = int(rng.integers(flat.size))
        old = flat[j]
        flat[j] = old + h
        up = loss_fn(model, items)
        flat[j] = old - h
        down = loss_fn(model, items)
        flat[j] = old
        numeric = (up - down) / (2 * h)
        analytic = grads[name].reshape(-1)[j]
        scale = max(abs(numeric), abs(analytic), 1e-7)
        errors.append(abs(numeric - analytic) / scale)
    return np.array(errors), sizes
