//! Message-passing layers on the tape. Node features are one row per node;
//! arcs are `(src, dst)` index pairs into those rows.

use std::sync::Arc;

use super::spec::Activation;
use crate::error::{Error, Result};
use crate::tensor::{Reduce, Tape, Var};

/// Arc list over `num_nodes` rows, stored as parallel source and destination
/// index arrays.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arcs {
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    pub num_nodes: usize,
}

impl Arcs {
    pub fn new(num_nodes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        for (i, &(s, d)) in pairs.iter().enumerate() {
            let bad = if s >= num_nodes { s } else { d };
            if s >= num_nodes || d >= num_nodes {
                return Err(Error::Index {
                    op: "arcs",
                    index: bad,
                    bound: num_nodes,
                    position: i,
                });
            }
        }
        Ok(Arcs {
            src: pairs.iter().map(|p| p.0).collect(),
            dst: pairs.iter().map(|p| p.1).collect(),
            num_nodes,
        })
    }

    pub fn empty(num_nodes: usize) -> Self {
        Arcs {
            src: Arc::from(Vec::new()),
            dst: Arc::from(Vec::new()),
            num_nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.src.iter().copied().zip(self.dst.iter().copied())
    }

    pub fn in_degree(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &d in self.dst.iter() {
            deg[d] += 1;
        }
        deg
    }

    /// Adds an `i → i` arc for every node without incoming arcs.
    pub fn with_isolated_self_arcs(&self) -> Arcs {
        let deg = self.in_degree();
        let mut pairs: Vec<(usize, usize)> = self.pairs().collect();
        pairs.extend((0..self.num_nodes).filter(|&i| deg[i] == 0).map(|i| (i, i)));
        Arcs {
            src: pairs.iter().map(|p| p.0).collect(),
            dst: pairs.iter().map(|p| p.1).collect(),
            num_nodes: self.num_nodes,
        }
    }

    fn check_rows(&self, op: &'static str, t: &Tape, h: Var) -> Result<()> {
        let shape = t.value(h).shape();
        if shape.0 != self.num_nodes {
            return Err(Error::Dimension {
                op,
                left: shape,
                right: (self.num_nodes, 0),
            });
        }
        Ok(())
    }
}

pub(crate) fn activate(t: &mut Tape, x: Var, act: Activation) -> Var {
    match act {
        Activation::Relu => t.relu(x),
        Activation::None => x,
    }
}

/// `act(h·W + b)`.
pub fn linear_forward(t: &mut Tape, h: Var, w: Var, b: Var, act: Activation) -> Result<Var> {
    let z = t.matmul(h, w)?;
    let z = t.add_row(z, b)?;
    Ok(activate(t, z, act))
}

/// Edge MLP `[h_i ‖ h_j − h_i] ↦ act([h_i ‖ h_j − h_i]·W + b)` with
/// `W = [w_center; w_offset]`.
#[derive(Clone, Copy, Debug)]
pub struct EdgeConvWeights {
    pub w_center: Var,
    pub w_offset: Var,
    pub b: Var,
}

/// Max over incoming arcs of the edge MLP. Nodes without incoming arcs
/// receive one implicit self-message.
pub fn edgeconv_forward(
    t: &mut Tape,
    h: Var,
    arcs: &Arcs,
    w: &EdgeConvWeights,
    act: Activation,
) -> Result<Var> {
    arcs.check_rows("edgeconv", t, h)?;
    let arcs = arcs.with_isolated_self_arcs();
    let center = t.matmul(h, w.w_center)?;
    let offset = t.matmul(h, w.w_offset)?;
    let dst_part = t.sub(center, offset)?;
    let dst_part = t.add_row(dst_part, w.b)?;
    let at_dst = t.gather_rows(dst_part, arcs.dst.clone())?;
    let at_src = t.gather_rows(offset, arcs.src.clone())?;
    let msg = t.add(at_dst, at_src)?;
    let msg = activate(t, msg, act);
    t.segment_reduce(msg, arcs.dst.clone(), arcs.num_nodes, Reduce::Max)
}

#[derive(Clone, Copy, Debug)]
pub struct SageWeights {
    pub w_self: Var,
    pub w_neigh: Var,
    pub b: Var,
}

/// `act(h_i·W_self + b + mean_{j→i}(h_j)·W_neigh)`.
pub fn sage_forward(t: &mut Tape, h: Var, arcs: &Arcs, w: &SageWeights, act: Activation) -> Result<Var> {
    arcs.check_rows("sage", t, h)?;
    let own = t.matmul(h, w.w_self)?;
    let own = t.add_row(own, w.b)?;
    let out = add_mean_term(t, own, h, arcs, w.w_neigh)?;
    Ok(activate(t, out, act))
}

fn add_mean_term(t: &mut Tape, acc: Var, h: Var, arcs: &Arcs, w: Var) -> Result<Var> {
    let nb = t.gather_rows(h, arcs.src.clone())?;
    let mean = t.segment_reduce(nb, arcs.dst.clone(), arcs.num_nodes, Reduce::Mean)?;
    let term = t.matmul(mean, w)?;
    t.add(acc, term)
}

/// GATv2 weights; `att` is 1×out_dim, one block of `out_dim / heads` per
/// head.
#[derive(Clone, Copy, Debug)]
pub struct GatWeights {
    pub w_dst: Var,
    pub w_src: Var,
    pub att: Var,
    pub b: Var,
    pub heads: usize,
}

pub const GAT_NEGATIVE_SLOPE: f64 = 0.2;

/// Attention coefficients, one row per arc and one column per head.
pub fn gatv2_attention(t: &mut Tape, h: Var, arcs: &Arcs, w: &GatWeights) -> Result<(Var, Var)> {
    arcs.check_rows("gatv2", t, h)?;
    let q = t.matmul(h, w.w_dst)?;
    let k = t.matmul(h, w.w_src)?;
    let qd = t.gather_rows(q, arcs.dst.clone())?;
    let ks = t.gather_rows(k, arcs.src.clone())?;
    let z = t.add(qd, ks)?;
    let z = t.leaky_relu(z, GAT_NEGATIVE_SLOPE);
    let scores = t.head_dot(z, w.att, w.heads)?;
    let alpha = t.segment_softmax(scores, arcs.dst.clone(), arcs.num_nodes)?;
    Ok((alpha, ks))
}

/// `act(b + Σ_{j→i} α_ji · h_j·W_src)` with heads concatenated.
pub fn gatv2_forward(t: &mut Tape, h: Var, arcs: &Arcs, w: &GatWeights, act: Activation) -> Result<Var> {
    let (alpha, values) = gatv2_attention(t, h, arcs, w)?;
    let msg = t.mul_heads(values, alpha, w.heads)?;
    let agg = t.segment_reduce(msg, arcs.dst.clone(), arcs.num_nodes, Reduce::Sum)?;
    let out = t.add_row(agg, w.b)?;
    Ok(activate(t, out, act))
}

/// Root weight plus one weight per slot, aligned with the slot arc lists
/// passed to [`rgcn_forward`].
#[derive(Clone, Debug)]
pub struct RgcnWeights {
    pub w_root: Var,
    pub w_slots: Vec<Var>,
    pub b: Var,
}

/// `act(h_i·W_0 + b + Σ_s mean_{j ∈ N_s(i)}(h_j)·W_s)`.
pub fn rgcn_forward(
    t: &mut Tape,
    h: Var,
    slot_arcs: &[Arcs],
    w: &RgcnWeights,
    act: Activation,
) -> Result<Var> {
    if slot_arcs.len() != w.w_slots.len() {
        return Err(Error::Config(format!(
            "relational layer has {} weights for {} arc groups",
            w.w_slots.len(),
            slot_arcs.len()
        )));
    }
    let own = t.matmul(h, w.w_root)?;
    let mut out = t.add_row(own, w.b)?;
    for (arcs, &ws) in slot_arcs.iter().zip(&w.w_slots) {
        arcs.check_rows("rgcn", t, h)?;
        if !arcs.is_empty() {
            out = add_mean_term(t, out, h, arcs, ws)?;
        }
    }
    Ok(activate(t, out, act))
}
