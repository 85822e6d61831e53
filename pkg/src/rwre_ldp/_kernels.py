"""Hot inner loops for the simulation engines, jitted with numba.

All kernels consume pre-drawn uniforms so that results are bit-identical
functions of the caller's stream, independent of numba's own RNG.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def torus_walk(cum, nxt, cls, moves, state0, uniforms, n_classes):
    """Walk on the folded chain; returns occupation and displacement.

    cum: (S, 2d) cumulative step probabilities per state
    nxt: (S, 2d) successor state per (state, direction)
    cls: (S,) strip class per state
    moves: (2d, d) signed unit steps
    Occupation counts include both endpoints (N+1 states for N steps).
    """
    d = moves.shape[1]
    state = state0
    class_counts = np.zeros(n_classes, dtype=np.int64)
    dir_counts = np.zeros(cum.shape[1], dtype=np.int64)
    disp = np.zeros(d, dtype=np.int64)
    max_abs = 0
    class_counts[cls[state]] += 1
    for n in range(uniforms.shape[0]):
        u = uniforms[n]
        row = cum[state]
        k = 0
        while row[k] <= u and k < row.shape[0] - 1:
            k += 1
        dir_counts[k] += 1
        for i in range(d):
            disp[i] += moves[k, i]
            a = disp[i] if disp[i] >= 0 else -disp[i]
            if a > max_abs:
                max_abs = a
        state = nxt[state, k]
        class_counts[cls[state]] += 1
    return dir_counts, class_counts, disp, max_abs


@njit(cache=True, nogil=True)
def box_walk(atom_idx, cum_atoms, lo, hi, moves, start, uniforms):
    """Walk on a sampled window; stops with the exit step if it leaves.

    atom_idx: flattened (C-order) atom index per box site
    cum_atoms: (n_atoms, 2d) cumulative step probabilities per atom
    Returns (position, max_abs_displacement, exit_step); exit_step is -1
    when the walk stayed inside for all steps.
    """
    d = moves.shape[1]
    pos = start.copy()
    shape = np.empty(d, dtype=np.int64)
    for i in range(d):
        shape[i] = hi[i] - lo[i] + 1
    max_abs = 0
    for n in range(uniforms.shape[0]):
        flat = 0
        for i in range(d):
            flat = flat * shape[i] + (pos[i] - lo[i])
        row = cum_atoms[atom_idx[flat]]
        u = uniforms[n]
        k = 0
        while row[k] <= u and k < row.shape[0] - 1:
            k += 1
        for i in range(d):
            pos[i] += moves[k, i]
        for i in range(d):
            if pos[i] < lo[i] or pos[i] > hi[i]:
                return pos, max_abs, n + 1
        for i in range(d):
            a = pos[i] - start[i]
            if a < 0:
                a = -a
            if a > max_abs:
                max_abs = a
    return pos, max_abs, -1


@njit(cache=True, nogil=True)
def tilted_return_weights_torus(cum_t, nxt, log_norm, moves, state0, uniforms, out):
    """Importance weights for return events under the site-tilted chain.

    cum_t: (S, 2d) cumulative tilted step probabilities
    log_norm: (S,) per-site log normalizer of the tilt
    uniforms: (samples, N); out: (samples,) receives exp(sum log_norm) on
    the samples whose displacement is zero after N steps, else 0.
    """
    d = moves.shape[1]
    samples, n_steps = uniforms.shape
    for s in range(samples):
        state = state0
        disp = np.zeros(d, dtype=np.int64)
        acc = 0.0
        for n in range(n_steps):
            acc += log_norm[state]
            u = uniforms[s, n]
            row = cum_t[state]
            k = 0
            while row[k] <= u and k < row.shape[0] - 1:
                k += 1
            for i in range(d):
                disp[i] += moves[k, i]
            state = nxt[state, k]
        returned = True
        for i in range(d):
            if disp[i] != 0:
                returned = False
        out[s] = np.exp(acc) if returned else 0.0


@njit(cache=True, nogil=True)
def tilted_return_weights_box(atom_idx, cum_t, log_norm, lo, hi, moves, start, uniforms, out):
    """Same as the torus variant, on a sampled window (atom-indexed).

    Walks that leave the window contribute weight 0 (their return event
    cannot be realized inside the sampled region).
    """
    d = moves.shape[1]
    samples, n_steps = uniforms.shape
    shape = np.empty(d, dtype=np.int64)
    for i in range(d):
        shape[i] = hi[i] - lo[i] + 1
    for s in range(samples):
        pos = start.copy()
        acc = 0.0
        alive = True
        for n in range(n_steps):
            flat = 0
            for i in range(d):
                flat = flat * shape[i] + (pos[i] - lo[i])
            a = atom_idx[flat]
            acc += log_norm[a]
            u = uniforms[s, n]
            row = cum_t[a]
            k = 0
            while row[k] <= u and k < row.shape[0] - 1:
                k += 1
            for i in range(d):
                pos[i] += moves[k, i]
            inside = True
            for i in range(d):
                if pos[i] < lo[i] or pos[i] > hi[i]:
                    inside = False
            if not inside:
                alive = False
                break
        if alive:
            returned = True
            for i in range(d):
                if pos[i] != start[i]:
                    returned = False
            out[s] = np.exp(acc) if returned else 0.0
        else:
            out[s] = 0.0


@njit(cache=True, nogil=True)
def torus_walk_record(cum, nxt, state0, uniforms, dirs_out):
    """Torus walk that records the chosen direction at every step."""
    state = state0
    for n in range(uniforms.shape[0]):
        u = uniforms[n]
        row = cum[state]
        k = 0
        while row[k] <= u and k < row.shape[0] - 1:
            k += 1
        dirs_out[n] = k
        state = nxt[state, k]
    return state


@njit(cache=True, nogil=True)
def interval_crossings(w_path, half_length, counts, nu_bar):
    """Crossing chain of overlapping intervals of half-length N on a circle.

    The interval index advances by +-1 whenever the projected path leaves
    the interval centered at index*half_length; counts accumulates visits
    per index modulo nu_bar.  Returns the number of crossings.
    """
    center = 0
    index = 0
    crossings = 0
    for n in range(w_path.shape[0]):
        w = w_path[n]
        while w - center > half_length:
            center += half_length
            index += 1
            counts[index % nu_bar] += 1
            crossings += 1
        while center - w > half_length:
            center -= half_length
            index -= 1
            counts[index % nu_bar] += 1
            crossings += 1
    return crossings


@njit(cache=True, nogil=True)
def composed_walk(nxt, cls, stream_dirs, state0, n_steps):
    """Composite walk advanced by per-strip independent step streams.

    At each step the stream of the current strip class supplies the next
    direction; returns the per-stream consumption counters (the occupation
    times of X_0 .. X_{n-1}) and the torus state path length bookkeeping.
    """
    j = stream_dirs.shape[0]
    cursors = np.zeros(j, dtype=np.int64)
    state = state0
    for n in range(n_steps):
        i = cls[state]
        k = stream_dirs[i, cursors[i]]
        cursors[i] += 1
        state = nxt[state, k]
    return cursors, state
