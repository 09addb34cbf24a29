use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{LayerKind, ModelSpec};
use crate::error::{Error, Result};
use crate::graph::Modality;
use crate::tensor::{Tape, Tensor, Var};

/// Shape and Glorot fans of one parameter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// `None` for biases, which start at zero.
    pub fans: Option<(usize, usize)>,
}

impl ParamShape {
    fn weight(name: String, rows: usize, cols: usize) -> Self {
        ParamShape {
            name,
            rows,
            cols,
            fans: Some((rows, cols)),
        }
    }

    fn bias(name: String, cols: usize) -> Self {
        ParamShape {
            name,
            rows: 1,
            cols,
            fans: None,
        }
    }

    pub fn glorot_bound(&self) -> f64 {
        self.fans
            .map_or(0.0, |(fi, fo)| (6.0 / (fi + fo) as f64).sqrt())
    }
}

pub fn modality_name(m: Modality) -> &'static str {
    match m {
        Modality::Vision => "vision",
        Modality::Depth => "depth",
        Modality::Text => "text",
    }
}

/// Every parameter of `spec`, in a fixed order.
pub fn param_layout(spec: &ModelSpec) -> Vec<ParamShape> {
    let mut out = Vec::new();
    if let Some(p) = spec.projection {
        for m in spec.modalities() {
            let name = modality_name(m);
            out.push(ParamShape::weight(
                format!("proj.{name}.w"),
                spec.input_dims.of_modality(m),
                p,
            ));
            out.push(ParamShape::bias(format!("proj.{name}.b"), p));
        }
    }
    let slots = spec.weight_map().num_slots();
    for (i, l) in spec.layers.iter().enumerate() {
        let (a, b) = (l.in_dim, l.out_dim);
        let w = |s: &str| ParamShape::weight(format!("layer{i}.{s}"), a, b);
        match l.kind {
            LayerKind::Linear => out.push(w("w")),
            LayerKind::EdgeConv => {
                // Glorot over the full stacked [w_center; w_offset] matrix.
                for s in ["w_center", "w_offset"] {
                    let mut p = w(s);
                    p.fans = Some((2 * a, b));
                    out.push(p);
                }
            }
            LayerKind::Sage => {
                out.push(w("w_self"));
                out.push(w("w_neigh"));
            }
            LayerKind::Gat => {
                out.push(w("w_dst"));
                out.push(w("w_src"));
                let mut att = ParamShape::weight(format!("layer{i}.att"), 1, b);
                att.fans = Some((b / l.heads, 1));
                out.push(att);
            }
            LayerKind::Rgcn => {
                out.push(w("w_root"));
                for s in 0..slots {
                    out.push(w(&format!("w_rel{s}")));
                }
            }
        }
        out.push(ParamShape::bias(format!("layer{i}.b"), b));
    }
    out.push(ParamShape::weight("head.w".into(), spec.output_width(), spec.num_classes));
    out.push(ParamShape::bias("head.b".into(), spec.num_classes));
    out
}

/// Named parameter tensors in layout order.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl Params {
    pub fn new(names: Vec<String>, values: Vec<Tensor>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::Config(format!(
                "{} names for {} parameters",
                names.len(),
                values.len()
            )));
        }
        Ok(Params { names, values })
    }

    /// All-zero parameters for `spec`.
    pub fn zeros(spec: &ModelSpec) -> Self {
        let layout = param_layout(spec);
        Params {
            values: layout.iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect(),
            names: layout.into_iter().map(|p| p.name).collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index_of(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index_of(name).map(move |i| &mut self.values[i])
    }

    /// Replaces one parameter, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))?;
        if slot.shape() != value.shape() {
            return Err(Error::Dimension {
                op: "set_param",
                left: slot.shape(),
                right: value.shape(),
            });
        }
        *slot = value;
        Ok(())
    }

    /// Checks names and shapes against the layout of `spec`.
    pub fn check_against(&self, spec: &ModelSpec) -> Result<()> {
        let layout = param_layout(spec);
        if layout.len() != self.len() {
            return Err(Error::Format(format!(
                "model expects {} parameters, found {}",
                layout.len(),
                self.len()
            )));
        }
        for (p, (n, v)) in layout.iter().zip(self.names.iter().zip(&self.values)) {
            if p.name != *n || (p.rows, p.cols) != v.shape() {
                return Err(Error::Format(format!(
                    "parameter {n} {:?} does not match {} ({}, {})",
                    v.shape(),
                    p.name,
                    p.rows,
                    p.cols
                )));
            }
        }
        Ok(())
    }

    /// Registers every parameter on `tape`, as gradient leaves when
    /// `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound<'_> {
        let vars = self
            .values
            .iter()
            .map(|v| {
                if trainable {
                    tape.leaf(v.clone())
                } else {
                    tape.constant(v.clone())
                }
            })
            .collect();
        Bound { params: self, vars }
    }
}

/// Parameters registered on a tape.
#[derive(Clone, Debug)]
pub struct Bound<'a> {
    params: &'a Params,
    vars: Vec<Var>,
}

impl<'a> Bound<'a> {
    /// Pairs `vars`, already on a tape, with the names of `params`.
    pub fn from_vars(params: &'a Params, vars: Vec<Var>) -> Result<Self> {
        if vars.len() != params.len() {
            return Err(Error::Config(format!(
                "{} variables for {} parameters",
                vars.len(),
                params.len()
            )));
        }
        Ok(Bound { params, vars })
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.params
            .index_of(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Glorot-uniform weights and zero biases, deterministic in `seed`.
pub fn init_weights(spec: &ModelSpec, seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = param_layout(spec);
    let values = layout
        .iter()
        .map(|p| {
            let bound = p.glorot_bound();
            let mut t = Tensor::zeros(p.rows, p.cols);
            if p.fans.is_some() {
                for v in t.data_mut() {
                    *v = rng.random_range(-bound..=bound);
                }
            }
            t
        })
        .collect();
    Params {
        names: layout.into_iter().map(|p| p.name).collect(),
        values,
    }
}
