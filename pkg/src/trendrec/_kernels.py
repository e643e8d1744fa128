"""Numba-compiled inner loops for training and segmentation refits.

The SGD kernel applies the pairwise ranking update sequentially over a
batch of pre-sampled quadruples, touching only the parameters that
appear in the score difference of the sampled pair (so per-epoch
parameters of other epochs are never read or written). Parameters may
be float32 or float64; all accumulation happens in float64 locals.

Randomness lives outside these kernels: callers pass pre-sampled index
arrays, which keeps single-threaded runs bit-reproducible.
"""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=False)
def sgd_kernel(u_arr, i_arr, j_arr, ep_arr,
               user_factors, item_factors, visual_user_factors,
               embedding, visual_bias,
               embedding_drift, dim_weights, visual_bias_weights, visual_bias_drift,
               item_bias, category_bias, categories,
               feat_indptr, feat_indices, feat_values,
               use_visual, use_tv, use_tnv, use_tax,
               lr, lam, lam_t):
    """Run one ranking update per sampled (user, pos, neg, epoch) row.

    Returns the mean log-sigmoid of the score differences, evaluated
    before each update (the running objective estimate).
    """
    n = u_arr.shape[0]
    k_lat = user_factors.shape[1]
    k_vis = visual_user_factors.shape[1]

    e_fi = np.zeros(k_vis, dtype=np.float64)   # embedding @ f_i
    e_fj = np.zeros(k_vis, dtype=np.float64)
    th_i = np.zeros(k_vis, dtype=np.float64)   # item visual factors at the epoch
    th_j = np.zeros(k_vis, dtype=np.float64)
    thu_old = np.zeros(k_vis, dtype=np.float64)
    w_old = np.ones(k_vis, dtype=np.float64)

    obj = 0.0
    for s in range(n):
        u = u_arr[s]
        i = i_arr[s]
        j = j_arr[s]
        e = ep_arr[s]
        ev = e if use_tv else 0
        eb = e if use_tnv else 0

        # score difference; the offset and user bias cancel
        x = np.float64(item_bias[eb, i]) - np.float64(item_bias[eb, j])
        ci = 0
        cj = 0
        if use_tax:
            ci = categories[i]
            cj = categories[j]
            if ci != cj:
                x += np.float64(category_bias[eb, ci]) - np.float64(category_bias[eb, cj])
        for k in range(k_lat):
            x += np.float64(user_factors[u, k]) * (
                np.float64(item_factors[i, k]) - np.float64(item_factors[j, k]))

        i0 = i1 = j0 = j1 = 0
        if use_visual:
            i0, i1 = feat_indptr[i], feat_indptr[i + 1]
            j0, j1 = feat_indptr[j], feat_indptr[j + 1]
            for k in range(k_vis):
                acc = 0.0
                for p in range(i0, i1):
                    acc += np.float64(embedding[k, feat_indices[p]]) * np.float64(feat_values[p])
                e_fi[k] = acc
                acc = 0.0
                for p in range(j0, j1):
                    acc += np.float64(embedding[k, feat_indices[p]]) * np.float64(feat_values[p])
                e_fj[k] = acc
            if use_tv:
                for k in range(k_vis):
                    acc_i = e_fi[k] * np.float64(dim_weights[ev, k])
                    acc_j = e_fj[k] * np.float64(dim_weights[ev, k])
                    for p in range(i0, i1):
                        acc_i += np.float64(embedding_drift[ev, k, feat_indices[p]]) \
                            * np.float64(feat_values[p])
                    for p in range(j0, j1):
                        acc_j += np.float64(embedding_drift[ev, k, feat_indices[p]]) \
                            * np.float64(feat_values[p])
                    th_i[k] = acc_i
                    th_j[k] = acc_j
                for p in range(i0, i1):
                    m = feat_indices[p]
                    x += (np.float64(visual_bias[m]) * np.float64(visual_bias_weights[ev, m])
                          + np.float64(visual_bias_drift[ev, m])) * np.float64(feat_values[p])
                for p in range(j0, j1):
                    m = feat_indices[p]
                    x -= (np.float64(visual_bias[m]) * np.float64(visual_bias_weights[ev, m])
                          + np.float64(visual_bias_drift[ev, m])) * np.float64(feat_values[p])
            else:
                for k in range(k_vis):
                    th_i[k] = e_fi[k]
                    th_j[k] = e_fj[k]
            for k in range(k_vis):
                x += np.float64(visual_user_factors[u, k]) * (th_i[k] - th_j[k])

        # sigma(-x) and log sigma(x), overflow-safe
        if x >= 0.0:
            t = np.exp(-x)
            mult = t / (1.0 + t)
            obj += -np.log1p(t)
        else:
            t = np.exp(x)
            mult = 1.0 / (1.0 + t)
            obj += x - np.log1p(t)

        # biases
        item_bias[eb, i] += lr * (mult - lam * np.float64(item_bias[eb, i]))
        item_bias[eb, j] += lr * (-mult - lam * np.float64(item_bias[eb, j]))
        if use_tax and ci != cj:
            category_bias[eb, ci] += lr * (mult - lam * np.float64(category_bias[eb, ci]))
            category_bias[eb, cj] += lr * (-mult - lam * np.float64(category_bias[eb, cj]))

        # latent factors, gradients taken at the pre-update values
        for k in range(k_lat):
            gu = np.float64(user_factors[u, k])
            gi = np.float64(item_factors[i, k])
            gj = np.float64(item_factors[j, k])
            user_factors[u, k] = gu + lr * (mult * (gi - gj) - lam * gu)
            item_factors[i, k] = gi + lr * (mult * gu - lam * gi)
            item_factors[j, k] = gj + lr * (-mult * gu - lam * gj)

        if use_visual:
            for k in range(k_vis):
                tu = np.float64(visual_user_factors[u, k])
                thu_old[k] = tu
                if use_tv:
                    wk = np.float64(dim_weights[ev, k])
                    w_old[k] = wk
                    dim_weights[ev, k] = wk + lr * (mult * tu * (e_fi[k] - e_fj[k]) - lam_t * wk)
                visual_user_factors[u, k] = tu + lr * (mult * (th_i[k] - th_j[k]) - lam * tu)

            # merged walk over the union of the two items' nonzero columns
            pi = i0
            pj = j0
            while pi < i1 or pj < j1:
                if pj >= j1 or (pi < i1 and feat_indices[pi] < feat_indices[pj]):
                    m = feat_indices[pi]
                    diff = np.float64(feat_values[pi])
                    pi += 1
                elif pi >= i1 or feat_indices[pj] < feat_indices[pi]:
                    m = feat_indices[pj]
                    diff = -np.float64(feat_values[pj])
                    pj += 1
                else:
                    m = feat_indices[pi]
                    diff = np.float64(feat_values[pi]) - np.float64(feat_values[pj])
                    pi += 1
                    pj += 1
                if diff == 0.0:
                    # identical coefficient on both sides cancels out of the
                    # difference, so the column is not touched at all
                    continue
                step = lr * mult * diff
                if use_tv:
                    for k in range(k_vis):
                        embedding[k, m] += step * thu_old[k] * w_old[k]
                        embedding_drift[ev, k, m] += lr * (
                            mult * thu_old[k] * diff
                            - lam_t * np.float64(embedding_drift[ev, k, m]))
                    bv = np.float64(visual_bias[m])
                    bw = np.float64(visual_bias_weights[ev, m])
                    visual_bias[m] = bv + step * bw
                    visual_bias_weights[ev, m] = bw + lr * (mult * bv * diff - lam_t * bw)
                    visual_bias_drift[ev, m] += lr * (
                        mult * diff - lam_t * np.float64(visual_bias_drift[ev, m]))
                else:
                    for k in range(k_vis):
                        embedding[k, m] += step * thu_old[k]

    return obj / n


@njit(cache=True, fastmath=False)
def likelihood_kernel(i_arr, bin_arr, negatives,
                      gamma_u_rows, theta_u_rows,
                      base, gamma_items, theta_items,
                      out):
    """Accumulate sampled log-likelihood contributions into out[bin, epoch].

    One row per training positive: its item, bin, the user's factor
    rows, and a row of sampled negatives shared across epochs.
    """
    n = i_arr.shape[0]
    num_epochs = base.shape[0]
    k_lat = gamma_u_rows.shape[1]
    k_vis = theta_u_rows.shape[1]
    sample_size = negatives.shape[1]

    pos_vis = np.zeros(num_epochs, dtype=np.float64)
    acc = np.zeros(num_epochs, dtype=np.float64)
    for s in range(n):
        i = i_arr[s]
        b = bin_arr[s]
        gd_i = 0.0
        for k in range(k_lat):
            gd_i += gamma_u_rows[s, k] * gamma_items[i, k]
        for e in range(num_epochs):
            v = 0.0
            for k in range(k_vis):
                v += theta_u_rows[s, k] * theta_items[e, i, k]
            pos_vis[e] = v
            acc[e] = 0.0
        for t in range(sample_size):
            j = negatives[s, t]
            gd = gd_i
            for k in range(k_lat):
                gd -= gamma_u_rows[s, k] * gamma_items[j, k]
            for e in range(num_epochs):
                d = (base[e, i] - base[e, j]) + gd + pos_vis[e]
                for k in range(k_vis):
                    d -= theta_u_rows[s, k] * theta_items[e, j, k]
                if d >= 0.0:
                    acc[e] += -np.log1p(np.exp(-d))
                else:
                    acc[e] += d - np.log1p(np.exp(d))
        for e in range(num_epochs):
            out[b, e] += acc[e] / sample_size
