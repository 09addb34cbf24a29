//! Per-node double-loop versions of each layer, written for clarity rather
//! than speed. Used as test oracles for the vectorized layers.

use super::spec::Activation;
use crate::tensor::Tensor;

fn act(x: f64, a: Activation) -> f64 {
    match a {
        Activation::Relu => x.max(0.0),
        Activation::None => x,
    }
}

/// `x·W` for a single row.
fn vec_mat(x: &[f64], w: &Tensor) -> Vec<f64> {
    (0..w.cols())
        .map(|c| x.iter().enumerate().map(|(r, v)| v * w.get(r, c)).sum())
        .collect()
}

fn incoming(arcs: &[(usize, usize)], i: usize) -> Vec<usize> {
    arcs.iter().filter(|a| a.1 == i).map(|a| a.0).collect()
}

pub fn edgeconv(
    h: &Tensor,
    arcs: &[(usize, usize)],
    w_center: &Tensor,
    w_offset: &Tensor,
    b: &Tensor,
    a: Activation,
) -> Tensor {
    let mut out = Tensor::zeros(h.rows(), w_center.cols());
    for i in 0..h.rows() {
        let hi = h.row(i);
        let mut nb = incoming(arcs, i);
        if nb.is_empty() {
            nb.push(i);
        }
        let mut best = vec![f64::NEG_INFINITY; out.cols()];
        for j in nb {
            let diff: Vec<f64> = h.row(j).iter().zip(hi).map(|(x, y)| x - y).collect();
            let p = vec_mat(hi, w_center);
            let q = vec_mat(&diff, w_offset);
            for c in 0..best.len() {
                let m = act(p[c] + q[c] + b.get(0, c), a);
                best[c] = best[c].max(m);
            }
        }
        out.row_mut(i).copy_from_slice(&best);
    }
    out
}

fn mean_of(h: &Tensor, nb: &[usize]) -> Vec<f64> {
    let mut m = vec![0.0; h.cols()];
    for &j in nb {
        for (s, v) in m.iter_mut().zip(h.row(j)) {
            *s += v;
        }
    }
    if !nb.is_empty() {
        for s in &mut m {
            *s /= nb.len() as f64;
        }
    }
    m
}

pub fn sage(
    h: &Tensor,
    arcs: &[(usize, usize)],
    w_self: &Tensor,
    w_neigh: &Tensor,
    b: &Tensor,
    a: Activation,
) -> Tensor {
    let mut out = Tensor::zeros(h.rows(), w_self.cols());
    for i in 0..h.rows() {
        let own = vec_mat(h.row(i), w_self);
        let nb = vec_mat(&mean_of(h, &incoming(arcs, i)), w_neigh);
        for c in 0..out.cols() {
            out.set(i, c, act(own[c] + nb[c] + b.get(0, c), a));
        }
    }
    out
}

/// Returns the layer output and the attention weight of each arc (rows in
/// arc order, one column per head).
#[allow(clippy::too_many_arguments)]
pub fn gatv2(
    h: &Tensor,
    arcs: &[(usize, usize)],
    w_dst: &Tensor,
    w_src: &Tensor,
    att: &Tensor,
    b: &Tensor,
    heads: usize,
    slope: f64,
    a: Activation,
) -> (Tensor, Tensor) {
    let out_dim = w_dst.cols();
    let k = out_dim / heads;
    let mut out = Tensor::zeros(h.rows(), out_dim);
    let mut alpha = Tensor::zeros(arcs.len(), heads);
    for i in 0..h.rows() {
        let qi = vec_mat(h.row(i), w_dst);
        let idx: Vec<usize> = (0..arcs.len()).filter(|&e| arcs[e].1 == i).collect();
        for hd in 0..heads {
            let scores: Vec<f64> = idx
                .iter()
                .map(|&e| {
                    let kj = vec_mat(h.row(arcs[e].0), w_src);
                    (hd * k..(hd + 1) * k)
                        .map(|c| {
                            let z = qi[c] + kj[c];
                            let z = if z > 0.0 { z } else { slope * z };
                            att.get(0, c) * z
                        })
                        .sum()
                })
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = exps.iter().sum();
            for (n, &e) in idx.iter().enumerate() {
                let wgt = exps[n] / z;
                alpha.set(e, hd, wgt);
                let kj = vec_mat(h.row(arcs[e].0), w_src);
                for c in hd * k..(hd + 1) * k {
                    let v = out.get(i, c) + wgt * kj[c];
                    out.set(i, c, v);
                }
            }
        }
        for c in 0..out_dim {
            let v = act(out.get(i, c) + b.get(0, c), a);
            out.set(i, c, v);
        }
    }
    (out, alpha)
}

/// `slot_arcs[s]` holds the arcs sharing weight `w_slots[s]`.
pub fn rgcn(
    h: &Tensor,
    slot_arcs: &[Vec<(usize, usize)>],
    w_root: &Tensor,
    w_slots: &[Tensor],
    b: &Tensor,
    a: Activation,
) -> Tensor {
    let mut out = Tensor::zeros(h.rows(), w_root.cols());
    for i in 0..h.rows() {
        let mut acc = vec_mat(h.row(i), w_root);
        for (arcs, w) in slot_arcs.iter().zip(w_slots) {
            let nb = incoming(arcs, i);
            if nb.is_empty() {
                continue;
            }
            for (s, v) in acc.iter_mut().zip(vec_mat(&mean_of(h, &nb), w)) {
                *s += v;
            }
        }
        for c in 0..out.cols() {
            out.set(i, c, act(acc[c] + b.get(0, c), a));
        }
    }
    out
}

pub fn linear(h: &Tensor, w: &Tensor, b: &Tensor, a: Activation) -> Tensor {
    let mut out = Tensor::zeros(h.rows(), w.cols());
    for i in 0..h.rows() {
        let z = vec_mat(h.row(i), w);
        for c in 0..out.cols() {
            out.set(i, c, act(z[c] + b.get(0, c), a));
        }
    }
    out
}
