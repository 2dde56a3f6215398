"""Numba kernels for the hot simulation loops.

All kernels draw their randomness from an inline xoshiro256++ generator whose
four uint64 words are threaded through as scalars (they stay in registers).
Slot/direction choices reuse fractional bits of a single uniform per event;
the residual discretization bias is ~2**-50, far below Monte Carlo noise.

Array conventions: ``bits`` is uint8 per site, ``disc[x]`` counts neighbors
of x (out-neighbors) holding the opposite opinion, ``nbr_in[x]`` lists the
sites whose rates change when x flips.  The active set is kept as a
swap-removable index list with back-pointers in ``apos``.
"""

import numpy as np
from numba import njit

INV53 = 1.0 / 9007199254740992.0
_U11 = np.uint64(11)
_U17 = np.uint64(17)
_U19 = np.uint64(19)
_U23 = np.uint64(23)
_U41 = np.uint64(41)
_U45 = np.uint64(45)


@njit(inline="always", cache=True)
def _u64(s0, s1, s2, s3):
    r = s0 + s3
    r = ((r << _U23) | (r >> _U41)) + s0
    t = s1 << _U17
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = (s3 << _U45) | (s3 >> _U19)
    return s0, s1, s2, s3, r


@njit(inline="always", cache=True)
def _unif(s0, s1, s2, s3):
    s0, s1, s2, s3, r = _u64(s0, s1, s2, s3)
    return s0, s1, s2, s3, np.float64(r >> _U11) * INV53


@njit(inline="always", cache=True)
def _set_active(y, on, active, apos, n_act):
    if on:
        if apos[y] < 0:
            active[n_act] = y
            apos[y] = n_act
            n_act += 1
    else:
        if apos[y] >= 0:
            p = apos[y]
            last = active[n_act - 1]
            active[p] = last
            apos[last] = p
            n_act -= 1
            apos[y] = -1
    return n_act


@njit(inline="always", cache=True)
def _flip(x, bits, disc, nbr_in, active, apos, n_act):
    """Flip site x, updating discordance counts and the active set."""
    k = nbr_in.shape[1]
    v = bits[x]
    bits[x] = 1 - v
    disc[x] = k - disc[x]
    n_act = _set_active(x, disc[x] > 0, active, apos, n_act)
    for j in range(k):
        y = np.int64(nbr_in[x, j])
        if bits[y] == v:
            disc[y] += 1
        else:
            disc[y] -= 1
        n_act = _set_active(y, disc[y] > 0, active, apos, n_act)
    return n_act


@njit(cache=True)
def init_active(disc, active, apos):
    n = disc.shape[0]
    n_act = 0
    for x in range(n):
        if disc[x] > 0:
            active[n_act] = x
            apos[x] = n_act
            n_act += 1
        else:
            apos[x] = -1
    return n_act


@njit(cache=True, nogil=True)
def dynamics_run(s0, s1, s2, s3, bits, disc, nbr_in, rate_tab, r_cap,
                 t_max, sample_dt, dens_out, ev_out, active, apos):
    """Exact continuous-time run via active-set rejection sampling.

    Waits Exp(n_act * r_cap), picks an active site uniformly, flips it with
    probability rate/r_cap.  Records density and cumulative flip count on
    the grid i*sample_dt.  Returns (events, final_t, absorbed_time, ones,
    s0, s1, s2, s3); absorbed_time is -1.0 when the run reached t_max
    unabsorbed.
    """
    n = bits.shape[0]
    n_act = init_active(disc, active, apos)
    ones = np.int64(0)
    for x in range(n):
        ones += bits[x]
    nsamp = dens_out.shape[0]
    t = 0.0
    isamp = 0
    events = np.int64(0)
    absorbed_t = -1.0
    while True:
        if n_act == 0:
            absorbed_t = t
            while isamp < nsamp:
                dens_out[isamp] = ones / n
                ev_out[isamp] = events
                isamp += 1
            t = t_max
            break
        s0, s1, s2, s3, u1 = _unif(s0, s1, s2, s3)
        t_next = t + (-np.log1p(-u1) / (n_act * r_cap))
        while isamp < nsamp and isamp * sample_dt < t_next:
            dens_out[isamp] = ones / n
            ev_out[isamp] = events
            isamp += 1
        if t_next > t_max:
            while isamp < nsamp:
                dens_out[isamp] = ones / n
                ev_out[isamp] = events
                isamp += 1
            t = t_max
            break
        t = t_next
        s0, s1, s2, s3, u = _unif(s0, s1, s2, s3)
        u *= n_act
        ix = np.int64(u)
        x = np.int64(active[ix])
        if (u - np.float64(ix)) * r_cap < rate_tab[disc[x]]:
            events += 1
            v = bits[x]
            ones += np.int64(1) - np.int64(2) * v
            n_act = _flip(x, bits, disc, nbr_in, active, apos, n_act)
    return events, t, absorbed_t, ones, s0, s1, s2, s3


@njit(cache=True, nogil=True)
def coupled_window_run(s0, s1, s2, s3, bits_a, bits_b, disc_a, disc_b, nbr_in,
                       tab_a, tab_b, voter_tab, r_cap, t1, t2, t_max,
                       sample_dt, dens_a, dens_b):
    """Two copies driven by one attempt stream; copy B runs tab/voter_tab
    outside/inside the window [t1, t2).  Attempts hit every site at rate
    r_cap (no active set) so both copies share the same thinning marks.
    Returns (events_a, events_b, discrepancy, s0, s1, s2, s3).
    """
    n = bits_a.shape[0]
    k = nbr_in.shape[1]
    nsamp = dens_a.shape[0]
    ones_a = np.int64(0)
    ones_b = np.int64(0)
    for x in range(n):
        ones_a += bits_a[x]
        ones_b += bits_b[x]
    t = 0.0
    isamp = 0
    ev_a = np.int64(0)
    ev_b = np.int64(0)
    total = n * r_cap
    while True:
        s0, s1, s2, s3, u1 = _unif(s0, s1, s2, s3)
        t_next = t + (-np.log1p(-u1) / total)
        while isamp < nsamp and isamp * sample_dt < t_next:
            dens_a[isamp] = ones_a / n
            dens_b[isamp] = ones_b / n
            isamp += 1
        if t_next > t_max:
            break
        t = t_next
        s0, s1, s2, s3, u = _unif(s0, s1, s2, s3)
        u *= n
        x = np.int64(u)
        thr = (u - np.float64(x)) * r_cap
        if thr < tab_a[disc_a[x]]:
            ev_a += 1
            v = bits_a[x]
            ones_a += np.int64(1) - np.int64(2) * v
            bits_a[x] = 1 - v
            disc_a[x] = k - disc_a[x]
            for j in range(k):
                y = np.int64(nbr_in[x, j])
                if bits_a[y] == v:
                    disc_a[y] += 1
                else:
                    disc_a[y] -= 1
        in_window = (t >= t1) and (t < t2)
        tb = voter_tab if in_window else tab_b
        if thr < tb[disc_b[x]]:
            ev_b += 1
            v = bits_b[x]
            ones_b += np.int64(1) - np.int64(2) * v
            bits_b[x] = 1 - v
            disc_b[x] = k - disc_b[x]
            for j in range(k):
                y = np.int64(nbr_in[x, j])
                if bits_b[y] == v:
                    disc_b[y] += 1
                else:
                    disc_b[y] -= 1
    discrepancy = np.int64(0)
    for x in range(n):
        if bits_a[x] != bits_b[x]:
            discrepancy += 1
    return ev_a, ev_b, discrepancy, s0, s1, s2, s3


@njit(cache=True, nogil=True)
def voter_hits(s0, s1, s2, s3, bits0, nbr_out, nbr_in, b_mask, t_run, reps,
               rate_tab, bits, disc, active, apos):
    """Run the pure voter from bits0 for time t_run, `reps` times; count the
    replicates whose final configuration has a 1 somewhere on b_mask."""
    n = bits0.shape[0]
    k = nbr_out.shape[1]
    hits = np.int64(0)
    for rep in range(reps):
        ones = np.int64(0)
        for x in range(n):
            bits[x] = bits0[x]
            ones += bits0[x]
        for x in range(n):
            d = 0
            for j in range(k):
                if bits[nbr_out[x, j]] != bits[x]:
                    d += 1
            disc[x] = d
        n_act = init_active(disc, active, apos)
        t = 0.0
        while n_act > 0:
            s0, s1, s2, s3, u1 = _unif(s0, s1, s2, s3)
            t += -np.log1p(-u1) / n_act
            if t > t_run:
                break
            s0, s1, s2, s3, u = _unif(s0, s1, s2, s3)
            u *= n_act
            ix = np.int64(u)
            x = np.int64(active[ix])
            if (u - np.float64(ix)) < rate_tab[disc[x]]:
                v = bits[x]
                ones += np.int64(1) - np.int64(2) * v
                n_act = _flip(x, bits, disc, nbr_in, active, apos, n_act)
        for x in range(n):
            if b_mask[x] and bits[x]:
                hits += 1
                break
    return hits, s0, s1, s2, s3


@njit(cache=True, nogil=True)
def crw_hits(s0, s1, s2, s3, start_sites, nbr_out, a_mask, t_run, reps, occ):
    """Coalescing random walks on the torus started from start_sites, run for
    time t_run, `reps` times; count replicates whose final walker set meets
    a_mask.  Each walker jumps at rate 1 to a uniform neighbor; walkers
    landing on an occupied site coalesce."""
    m0 = start_sites.shape[0]
    k = nbr_out.shape[1]
    pos = np.empty(m0, dtype=np.int64)
    hits = np.int64(0)
    for rep in range(reps):
        occ[:] = -1
        m = 0
        for i in range(m0):
            s = start_sites[i]
            if occ[s] < 0:
                pos[m] = s
                occ[s] = m
                m += 1
        t = 0.0
        while True:
            s0, s1, s2, s3, u1 = _unif(s0, s1, s2, s3)
            t += -np.log1p(-u1) / m
            if t > t_run:
                break
            s0, s1, s2, s3, u = _unif(s0, s1, s2, s3)
            u *= m
            i = np.int64(u)
            d = np.int64((u - np.float64(i)) * k)
            new = np.int64(nbr_out[pos[i], d])
            if occ[new] >= 0:
                # coalesce: drop walker i
                occ[pos[i]] = -1
                m -= 1
                if i != m:
                    pos[i] = pos[m]
                    occ[pos[i]] = i
            else:
                occ[pos[i]] = -1
                occ[new] = i
                pos[i] = new
        hit = False
        for i in range(m):
            if a_mask[pos[i]]:
                hit = True
                break
        if hit:
            hits += 1
    return hits, s0, s1, s2, s3


@njit(cache=True, nogil=True)
def coalescence_runs(rng, s0, s1, s2, s3, nev, k, deltas, ddeltas, sig_out):
    """Coalescing walks on the unbounded lattice from the origin and its k
    offsets; classifies the cluster partition reached by each replicate.

    Positions are packed 21 bits per coordinate into one int64, so a jump is
    a single add and a coincidence check a single compare.  Event counts
    `nev` are Poisson((k+1) * t_trunc) draws made by the caller; after each
    merge the remaining event count is re-thinned Binomial(m_new / m_old),
    which removes the absorbed label's jumps exactly.  Once two clusters
    remain, their difference walk (table ``ddeltas``, 2k entries) is used.

    sig_out[i] encodes the fate: nibble 12 holds s0 (neighbors that merged
    with the origin's walker), lower nibbles the remaining cluster sizes in
    ascending order.
    """
    mlab = k + 1
    base = (np.int64(1) << 20) | ((np.int64(1) << 20) << 21) | ((np.int64(1) << 20) << 42)
    n_rep = nev.shape[0]
    cpos = np.empty(mlab, dtype=np.int64)
    memb = np.empty(mlab, dtype=np.int64)
    sizes = np.empty(mlab, dtype=np.int64)
    for irep in range(n_rep):
        cpos[0] = base
        memb[0] = 1
        for j in range(k):
            cpos[j + 1] = base + deltas[j]
            memb[j + 1] = np.int64(1) << (j + 1)
        n_act = mlab
        n_real = np.int64(nev[irep])
        while n_real > 0 and n_act > 2:
            hit = -1
            sl = 0
            e = np.int64(0)
            while e < n_real:
                e += 1
                s0, s1, s2, s3, u = _unif(s0, s1, s2, s3)
                u *= n_act
                sl = np.int64(u)
                dd = np.int64((u - np.float64(sl)) * k)
                p = cpos[sl] + deltas[dd]
                cpos[sl] = p
                hit = -1
                for j in range(n_act):
                    found = (cpos[j] == p) and (j != sl)
                    hit = j if found else hit
                if hit >= 0:
                    break
            if hit < 0:
                break
            memb[hit] |= memb[sl]
            n_act -= 1
            cpos[sl] = cpos[n_act]
            memb[sl] = memb[n_act]
            rem = n_real - e
            if rem > 0:
                n_real = rng.binomial(rem, n_act / (n_act + 1.0))
            else:
                n_real = 0
        if n_act == 2 and n_real > 0:
            dp = cpos[0] - cpos[1] + base
            e = np.int64(0)
            k2 = 2 * k
            while e < n_real:
                e += 1
                s0, s1, s2, s3, u = _unif(s0, s1, s2, s3)
                dd = np.int64(u * k2)
                dp += ddeltas[dd]
                if dp == base:
                    memb[0] |= memb[1]
                    n_act = 1
                    break
        # classify: cluster containing label 0 gives s_0, the rest the sizes
        s0_count = np.int64(0)
        nsz = 0
        for j in range(n_act):
            m = memb[j]
            c = np.int64(0)
            for b in range(mlab):
                c += (m >> b) & 1
            if m & 1:
                s0_count = c - 1
            else:
                sizes[nsz] = c
                nsz += 1
        # insertion sort ascending
        for a in range(1, nsz):
            v = sizes[a]
            b = a - 1
            while b >= 0 and sizes[b] > v:
                sizes[b + 1] = sizes[b]
                b -= 1
            sizes[b + 1] = v
        sig = s0_count << 48
        for a in range(nsz):
            sig |= sizes[a] << (4 * (nsz - 1 - a))
        sig_out[irep] = sig
    return s0, s1, s2, s3


@njit(cache=True, nogil=True)
def coalescence_runs_torus(rng, s0, s1, s2, s3, nev, start_sites, nbr_out,
                           sig_out):
    """Torus variant of coalescence_runs: walker positions are site indices
    and jumps go through the neighbor table, so paths wrap.  Same ghostless
    re-thinned scheme; no difference-walk shortcut."""
    mlab = start_sites.shape[0]
    k = nbr_out.shape[1]
    cpos = np.empty(mlab, dtype=np.int64)
    memb = np.empty(mlab, dtype=np.int64)
    sizes = np.empty(mlab, dtype=np.int64)
    n_rep = nev.shape[0]
    for irep in range(n_rep):
        for j in range(mlab):
            cpos[j] = start_sites[j]
            memb[j] = np.int64(1) << j
        n_act = mlab
        n_real = np.int64(nev[irep])
        while n_real > 0 and n_act > 1:
            hit = -1
            sl = 0
            e = np.int64(0)
            while e < n_real:
                e += 1
                s0, s1, s2, s3, u = _unif(s0, s1, s2, s3)
                u *= n_act
                sl = np.int64(u)
                dd = np.int64((u - np.float64(sl)) * k)
                p = np.int64(nbr_out[cpos[sl], dd])
                cpos[sl] = p
                hit = -1
                for j in range(n_act):
                    found = (cpos[j] == p) and (j != sl)
                    hit = j if found else hit
                if hit >= 0:
                    break
            if hit < 0:
                break
            memb[hit] |= memb[sl]
            n_act -= 1
            cpos[sl] = cpos[n_act]
            memb[sl] = memb[n_act]
            rem = n_real - e
            if rem > 0:
                n_real = rng.binomial(rem, n_act / (n_act + 1.0))
            else:
                n_real = 0
        s0_count = np.int64(0)
        nsz = 0
        for j in range(n_act):
            m = memb[j]
            c = np.int64(0)
            for b in range(mlab):
                c += (m >> b) & 1
            if m & 1:
                s0_count = c - 1
            else:
                sizes[nsz] = c
                nsz += 1
        for a in range(1, nsz):
            v = sizes[a]
            b = a - 1
            while b >= 0 and sizes[b] > v:
                sizes[b + 1] = sizes[b]
                b -= 1
            sizes[b + 1] = v
        sig = s0_count << 48
        for a in range(nsz):
            sig |= sizes[a] << (4 * (nsz - 1 - a))
        sig_out[irep] = sig
    return s0, s1, s2, s3


@njit(cache=True, nogil=True)
def pair_noncoalescence(s0, s1, s2, s3, nev, start_delta, ddeltas):
    """Difference walk of two coalescing walkers one offset apart; counts the
    replicates in which the difference never returns to zero within its
    Poisson(2*horizon) event budget."""
    base = (np.int64(1) << 20) | ((np.int64(1) << 20) << 21) | ((np.int64(1) << 20) << 42)
    k2 = ddeltas.shape[0]
    survived = np.int64(0)
    for irep in range(nev.shape[0]):
        dp = base + start_delta
        alive = True
        n_ev = nev[irep]
        for e in range(n_ev):
            s0, s1, s2, s3, u = _unif(s0, s1, s2, s3)
            dp += ddeltas[np.int64(u * k2)]
            if dp == base:
                alive = False
                break
        if alive:
            survived += 1
    return survived


@njit(cache=True, nogil=True)
def birth_death_hitting(s0, s1, s2, s3, x0, z, rates, times, hit_top):
    """Continuous-time +-1 chain with jump rate rates[j] at state j, absorbed
    at 0 and z; fills per-replicate absorption times and top-hit flags."""
    reps = times.shape[0]
    for i in range(reps):
        j = x0
        t = 0.0
        while 0 < j < z:
            s0, s1, s2, s3, u1 = _unif(s0, s1, s2, s3)
            t += -np.log1p(-u1) / rates[j]
            s0, s1, s2, s3, u = _unif(s0, s1, s2, s3)
            if u < 0.5:
                j += 1
            else:
                j -= 1
        times[i] = t
        hit_top[i] = 1 if j == z else 0
    return s0, s1, s2, s3


@njit(cache=True, nogil=True)
def voter_rate_profile_run(s0, s1, s2, s3, bits, disc, nbr_in, t_max,
                           stop_high, time_at, ratetime, ups, downs,
                           active, apos):
    """Pure-voter run accumulating, per ones-count j: occupation time,
    time-integrated total flip rate, and up/down transition counts.
    Stops at t_max, at absorption, or when the ones count reaches
    stop_high (pass n+1 to disable)."""
    n = bits.shape[0]
    k = nbr_in.shape[1]
    n_act = init_active(disc, active, apos)
    ones = np.int64(0)
    sumdisc = np.int64(0)
    for x in range(n):
        ones += bits[x]
        sumdisc += disc[x]
    t = 0.0
    while n_act > 0 and ones < stop_high:
        s0, s1, s2, s3, u1 = _unif(s0, s1, s2, s3)
        dt = -np.log1p(-u1) / n_act
        if t + dt > t_max:
            dt = t_max - t
            time_at[ones] += dt
            ratetime[ones] += dt * (sumdisc / k)
            t = t_max
            break
        time_at[ones] += dt
        ratetime[ones] += dt * (sumdisc / k)
        t += dt
        s0, s1, s2, s3, u = _unif(s0, s1, s2, s3)
        u *= n_act
        ix = np.int64(u)
        x = np.int64(active[ix])
        if (u - np.float64(ix)) * k < disc[x]:
            v = bits[x]
            if v == 0:
                ups[ones] += 1
            else:
                downs[ones] += 1
            ones += np.int64(1) - np.int64(2) * v
            sumdisc += k - 2 * np.int64(disc[x])
            for j in range(k):
                y = np.int64(nbr_in[x, j])
                if bits[y] == v:
                    sumdisc += 1
                else:
                    sumdisc -= 1
            n_act = _flip(x, bits, disc, nbr_in, active, apos, n_act)
    return t, ones, s0, s1, s2, s3
