use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Matrix;
use crate::{Error, Result};

/// Non-parametric composition of a neighbour and a relation embedding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Composition {
    #[default]
    Sub,
    Mult,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

/// Triple decoder. TransE variants are distances, DistMult a similarity;
/// [`ScoreFn::goodness`] puts both on a higher-is-better scale.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreFn {
    #[default]
    #[serde(rename = "transe-l1")]
    TransEL1,
    #[serde(rename = "transe-l2")]
    TransEL2,
    DistMult,
}

impl std::str::FromStr for ScoreFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transe-l1" => Ok(ScoreFn::TransEL1),
            "transe-l2" => Ok(ScoreFn::TransEL2),
            "distmult" => Ok(ScoreFn::DistMult),
            _ => Err(Error::Config(format!("unknown score function `{s}`"))),
        }
    }
}

/// Everything needed to interpret a parameter set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub n_entities: usize,
    /// Relations of the encoded graph; the relation table stores 2x this.
    pub n_relations: usize,
    pub dim: usize,
    pub layers: usize,
    /// Whether the model carries alignment transforms (fused encoder).
    pub fused: bool,
    pub composition: Composition,
    pub activation: Activation,
    pub score_fn: ScoreFn,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    pub w_in: Matrix,
    pub w_out: Matrix,
    pub w_loop: Matrix,
    /// Shared transform applied to all relation embeddings after the layer.
    pub w_rel: Matrix,
    pub w_align: Option<Matrix>,
}

/// Embedding tables and encoder weights of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub shape: ModelShape,
    /// `n_entities x dim`.
    pub entity_emb: Matrix,
    /// `2 * n_relations x dim`: relation `r` at row `r`, its inverse at `n_relations + r`.
    pub relation_emb: Matrix,
    /// `1 x dim`.
    pub self_loop_rel: Matrix,
    pub layers: Vec<LayerWeights>,
}

fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Matrix::from_vec(rows, cols, data)
}

impl ModelParams {
    /// Embeddings uniform on `±6/√d`; weight matrices Glorot-uniform.
    pub fn init(shape: ModelShape, rng: &mut impl Rng) -> Self {
        let d = shape.dim;
        let emb_bound = 6.0 / (d as f64).sqrt();
        let w_bound = (6.0 / (2 * d) as f64).sqrt();
        let entity_emb = uniform(shape.n_entities, d, emb_bound, rng);
        let relation_emb = uniform(2 * shape.n_relations, d, emb_bound, rng);
        let self_loop_rel = uniform(1, d, emb_bound, rng);
        let layers = (0..shape.layers)
            .map(|_| LayerWeights {
                w_in: uniform(d, d, w_bound, rng),
                w_out: uniform(d, d, w_bound, rng),
                w_loop: uniform(d, d, w_bound, rng),
                w_rel: uniform(d, d, w_bound, rng),
                w_align: shape.fused.then(|| uniform(d, d, w_bound, rng)),
            })
            .collect();
        Self {
            shape,
            entity_emb,
            relation_emb,
            self_loop_rel,
            layers,
        }
    }

    /// Same shapes, every value zero.
    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            shape: self.shape,
            entity_emb: z(&self.entity_emb),
            relation_emb: z(&self.relation_emb),
            self_loop_rel: z(&self.self_loop_rel),
            layers: self
                .layers
                .iter()
                .map(|l| LayerWeights {
                    w_in: z(&l.w_in),
                    w_out: z(&l.w_out),
                    w_loop: z(&l.w_loop),
                    w_rel: z(&l.w_rel),
                    w_align: l.w_align.as_ref().map(z),
                })
                .collect(),
        }
    }

    /// Named tensors in a fixed canonical order.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![
            ("entity_emb".to_string(), &self.entity_emb),
            ("relation_emb".to_string(), &self.relation_emb),
            ("self_loop_rel".to_string(), &self.self_loop_rel),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.w_in"), &l.w_in));
            out.push((format!("layer{i}.w_out"), &l.w_out));
            out.push((format!("layer{i}.w_loop"), &l.w_loop));
            out.push((format!("layer{i}.w_rel"), &l.w_rel));
            if let Some(w) = &l.w_align {
                out.push((format!("layer{i}.w_align"), w));
            }
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        self.named_tensors().into_iter().map(|(_, m)| m).collect()
    }

    /// Mutable tensors, same order as [`ModelParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.entity_emb, &mut self.relation_emb, &mut self.self_loop_rel];
        for l in &mut self.layers {
            out.push(&mut l.w_in);
            out.push(&mut l.w_out);
            out.push(&mut l.w_loop);
            out.push(&mut l.w_rel);
            if let Some(w) = &mut l.w_align {
                out.push(w);
            }
        }
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.shape;
        let d = s.dim;
        let check = |name: &str, m: &Matrix, rows: usize, cols: usize| {
            if m.shape() != (rows, cols) {
                return Err(Error::Checkpoint(format!(
                    "{name} has shape {:?}, expected ({rows}, {cols})",
                    m.shape()
                )));
            }
            if !m.is_finite() {
                return Err(Error::Numeric(format!("{name} holds non-finite values")));
            }
            Ok(())
        };
        check("entity_emb", &self.entity_emb, s.n_entities, d)?;
        check("relation_emb", &self.relation_emb, 2 * s.n_relations, d)?;
        check("self_loop_rel", &self.self_loop_rel, 1, d)?;
        if self.layers.len() != s.layers {
            return Err(Error::Checkpoint(format!(
                "{} layers stored, shape says {}",
                self.layers.len(),
                s.layers
            )));
        }
        for (i, l) in self.layers.iter().enumerate() {
            check(&format!("layer{i}.w_in"), &l.w_in, d, d)?;
            check(&format!("layer{i}.w_out"), &l.w_out, d, d)?;
            check(&format!("layer{i}.w_loop"), &l.w_loop, d, d)?;
            check(&format!("layer{i}.w_rel"), &l.w_rel, d, d)?;
            match (&l.w_align, s.fused) {
                (Some(w), true) => check(&format!("layer{i}.w_align"), w, d, d)?,
                (None, false) => {}
                _ => {
                    return Err(Error::Checkpoint(format!(
                        "layer{i}: alignment transform presence does not match the model kind"
                    )))
                }
            }
        }
        Ok(())
    }
}
