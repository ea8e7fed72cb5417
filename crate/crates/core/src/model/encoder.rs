//! Relational graph-convolution encoders.
//!
//! One layer computes, for every node `v`,
//!
//! ```text
//! h'_v = f( W_out · mean_{(u,r)→v} φ(h_u, h_r)
//!         + W_in  · mean_{(u,r⁻¹)→v} φ(h_u, h_r⁻¹)
//!         + W_loop · φ(h_v, h_loop)
//!         [+ W_align · mean_{u~v} h_u] )
//! ```
//!
//! where each mean runs over the edges of one direction entering `v`. The
//! bracketed alignment term exists only in the fused encoder; alignment
//! messages skip relation composition. Relation embeddings (including the
//! self-loop relation) are multiplied by `W_rel` after each layer.

use super::graph::{Adjacency, DirectedEdges};
use super::params::{Activation, Composition, ModelParams, ScoreFn};
use super::tape::{Gradients, Tape, Var};
use super::tensor::Matrix;
use crate::{Error, Result};

/// Tape handles of every parameter tensor of one model.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub entity: Var,
    pub relation: Var,
    pub self_loop: Var,
    pub layers: Vec<LayerVars>,
}

#[derive(Clone, Debug)]
pub struct LayerVars {
    pub w_in: Var,
    pub w_out: Var,
    pub w_loop: Var,
    pub w_rel: Var,
    pub w_align: Option<Var>,
}

impl ParamVars {
    pub fn register(tape: &mut Tape, params: &ModelParams) -> Self {
        Self {
            entity: tape.leaf(params.entity_emb.clone()),
            relation: tape.leaf(params.relation_emb.clone()),
            self_loop: tape.leaf(params.self_loop_rel.clone()),
            layers: params
                .layers
                .iter()
                .map(|l| LayerVars {
                    w_in: tape.leaf(l.w_in.clone()),
                    w_out: tape.leaf(l.w_out.clone()),
                    w_loop: tape.leaf(l.w_loop.clone()),
                    w_rel: tape.leaf(l.w_rel.clone()),
                    w_align: l.w_align.as_ref().map(|w| tape.leaf(w.clone())),
                })
                .collect(),
        }
    }

    /// Collects parameter gradients into a [`ModelParams`]-shaped container;
    /// tensors the loss never touched get zeros.
    pub fn collect(&self, grads: &mut Gradients, params: &ModelParams) -> ModelParams {
        let mut out = params.zeros_like();
        let mut take = |v: Var, dst: &mut Matrix| {
            if let Some(g) = grads.take(v) {
                *dst = g;
            }
        };
        take(self.entity, &mut out.entity_emb);
        take(self.relation, &mut out.relation_emb);
        take(self.self_loop, &mut out.self_loop_rel);
        for (lv, lo) in self.layers.iter().zip(&mut out.layers) {
            take(lv.w_in, &mut lo.w_in);
            take(lv.w_out, &mut lo.w_out);
            take(lv.w_loop, &mut lo.w_loop);
            take(lv.w_rel, &mut lo.w_rel);
            if let (Some(v), Some(dst)) = (lv.w_align, lo.w_align.as_mut()) {
                take(v, dst);
            }
        }
        out
    }
}

/// Contextualized embeddings on a tape.
#[derive(Clone, Copy, Debug)]
pub struct EncodedVars {
    pub entities: Var,
    /// `2 * n_relations` rows; rows `0..n_relations` are the forward relations.
    pub relations: Var,
}

/// Contextualized embeddings, detached from any tape.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedGraph {
    pub entity_out: Matrix,
    pub relation_out: Matrix,
    pub score_fn: ScoreFn,
}

impl EncodedGraph {
    pub fn from_tape(tape: &Tape, vars: EncodedVars, score_fn: ScoreFn) -> Self {
        Self {
            entity_out: tape.value(vars.entities).clone(),
            relation_out: tape.value(vars.relations).clone(),
            score_fn,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entity_out.rows()
    }

    /// Forward relations only.
    pub fn num_relations(&self) -> usize {
        self.relation_out.rows() / 2
    }
}

fn compose(tape: &mut Tape, kind: Composition, h: Var, r: Var) -> Var {
    match kind {
        Composition::Sub => tape.sub(h, r),
        Composition::Mult => tape.mul(h, r),
    }
}

fn directional_message(
    tape: &mut Tape,
    kind: Composition,
    h: Var,
    rel: Var,
    edges: &DirectedEdges,
    n: usize,
    w: Var,
) -> Var {
    let hu = tape.gather(h, edges.src.clone());
    let hr = tape.gather(rel, edges.rel.clone());
    let phi = compose(tape, kind, hu, hr);
    let agg = tape.scatter(phi, edges.dst.clone(), edges.norm.clone(), n);
    tape.linear(agg, w)
}

fn check_dims(params: &ModelParams, adj: &Adjacency) -> Result<()> {
    let s = &params.shape;
    if s.n_entities != adj.n_entities || s.n_relations != adj.n_relations {
        return Err(Error::Precondition(format!(
            "model expects {} entities / {} relations, graph has {} / {}",
            s.n_entities, s.n_relations, adj.n_entities, adj.n_relations
        )));
    }
    Ok(())
}

/// Records the encoder on `tape`.
///
/// Alignment messages are used iff `adj` carries alignment edges; the model
/// must then have alignment transforms.
pub fn encode_on_tape(tape: &mut Tape, vars: &ParamVars, params: &ModelParams, adj: &Adjacency) -> Result<EncodedVars> {
    check_dims(params, adj)?;
    let shape = &params.shape;
    let n = adj.n_entities;
    let (mut h, mut rel, mut self_loop) = (vars.entity, vars.relation, vars.self_loop);
    for (i, lv) in vars.layers.iter().enumerate() {
        let m_out = directional_message(tape, shape.composition, h, rel, &adj.out_edges, n, lv.w_out);
        let m_in = directional_message(tape, shape.composition, h, rel, &adj.in_edges, n, lv.w_in);
        let loop_rows = tape.gather(self_loop, vec![0; n]);
        let phi_loop = compose(tape, shape.composition, h, loop_rows);
        let m_loop = tape.linear(phi_loop, lv.w_loop);
        let mut total = tape.add(m_out, m_in);
        total = tape.add(total, m_loop);
        if let Some(align) = &adj.align_edges {
            let w = lv
                .w_align
                .ok_or_else(|| Error::Precondition("alignment edges given to a model without W_align".into()))?;
            let hu = tape.gather(h, align.src.clone());
            let agg = tape.scatter(hu, align.dst.clone(), align.norm.clone(), n);
            let m_align = tape.linear(agg, w);
            total = tape.add(total, m_align);
        }
        h = match shape.activation {
            Activation::Tanh => tape.tanh(total),
            Activation::Identity => total,
        };
        if !tape.value(h).is_finite() {
            return Err(Error::Numeric(format!("non-finite entity embeddings after layer {i}")));
        }
        rel = tape.linear(rel, lv.w_rel);
        self_loop = tape.linear(self_loop, lv.w_rel);
    }
    Ok(EncodedVars {
        entities: h,
        relations: rel,
    })
}

fn encode_detached(params: &ModelParams, adj: &Adjacency) -> Result<EncodedGraph> {
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params);
    let enc = encode_on_tape(&mut tape, &vars, params, adj)?;
    Ok(EncodedGraph::from_tape(&tape, enc, params.shape.score_fn))
}

/// Standard encoder over one KG (no alignment messages).
pub fn encode(params: &ModelParams, adj: &Adjacency) -> Result<EncodedGraph> {
    if adj.align_edges.is_some() {
        return Err(Error::Precondition(
            "encode takes a single-KG adjacency; use encode_fused for the fused graph".into(),
        ));
    }
    encode_detached(params, adj)
}

/// Alignment-augmented encoder over the fused graph.
pub fn encode_fused(params: &ModelParams, adj: &Adjacency) -> Result<EncodedGraph> {
    if adj.align_edges.is_none() {
        return Err(Error::Precondition("encode_fused needs a fused adjacency".into()));
    }
    encode_detached(params, adj)
}

/// Encodes with whichever encoder matches the adjacency.
pub fn encode_any(params: &ModelParams, adj: &Adjacency) -> Result<EncodedGraph> {
    encode_detached(params, adj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::LocalTriple;
    use crate::model::params::{LayerWeights, ModelShape};

    fn shape(n_entities: usize, n_relations: usize, fused: bool) -> ModelShape {
        ModelShape {
            n_entities,
            n_relations,
            dim: 2,
            layers: 1,
            fused,
            composition: Composition::Sub,
            activation: Activation::Tanh,
            score_fn: ScoreFn::TransEL1,
        }
    }

    fn zero_params(shape: ModelShape) -> ModelParams {
        let z = |r, c| Matrix::zeros(r, c);
        ModelParams {
            shape,
            entity_emb: z(shape.n_entities, 2),
            relation_emb: z(2 * shape.n_relations, 2),
            self_loop_rel: z(1, 2),
            layers: vec![LayerWeights {
                w_in: z(2, 2),
                w_out: z(2, 2),
                w_loop: z(2, 2),
                w_rel: Matrix::identity(2),
                w_align: shape.fused.then(|| z(2, 2)),
            }],
        }
    }

    #[test]
    fn isolated_zero_node_encodes_to_zero() {
        let mut p = zero_params(shape(1, 1, false));
        p.layers[0].w_loop = Matrix::identity(2);
        let adj = Adjacency::from_triples(1, 1, &[]);
        let out = encode(&p, &adj).unwrap();
        assert_eq!(out.entity_out.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn single_edge_hand_computation() {
        // (u=0, r=0, v=1), h_u=(1,0), h_r=(0,1), W_out=I, W_loop=0, h_v=0.
        let mut p = zero_params(shape(2, 1, false));
        p.entity_emb.row_mut(0).copy_from_slice(&[1.0, 0.0]);
        p.relation_emb.row_mut(0).copy_from_slice(&[0.0, 1.0]);
        p.layers[0].w_out = Matrix::identity(2);
        let adj = Adjacency::from_triples(2, 1, &[LocalTriple::new(0, 0, 1)]);
        let out = encode(&p, &adj).unwrap();
        assert_eq!(out.entity_out.row(1), &[1f64.tanh(), (-1f64).tanh()]);
    }

    #[test]
    fn aligned_pair_passes_raw_embedding() {
        use crate::kg::{build_fused_kg, testutil::store_from_counts, EntityRef, SeedAlignment};
        let mut s = store_from_counts(&[1, 1], &[1, 1], false);
        s.set_alignments(vec![
            SeedAlignment::new(EntityRef::new(0, 0), EntityRef::new(1, 0)).unwrap()
        ]);
        let fused = build_fused_kg(&s).unwrap();
        let adj = Adjacency::from_fused(&fused);
        let mut p = zero_params(shape(2, fused.num_relations(), true));
        p.entity_emb.row_mut(0).copy_from_slice(&[1.0, 0.0]);
        p.layers[0].w_align = Some(Matrix::identity(2));
        let out = encode_fused(&p, &adj).unwrap();
        assert_eq!(out.entity_out.row(1), &[1f64.tanh(), 0.0]);
        // b = 0 sends nothing back to a.
        assert_eq!(out.entity_out.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn wrong_adjacency_kind_is_rejected() {
        let p = zero_params(shape(2, 1, false));
        let adj = Adjacency::from_triples(2, 1, &[]);
        assert!(encode_fused(&p, &adj).is_err());
        let adj3 = Adjacency::from_triples(3, 1, &[]);
        assert!(encode(&p, &adj3).is_err());
    }

    #[test]
    fn overflow_is_a_numeric_error() {
        let mut p = zero_params(shape(1, 1, false));
        p.shape.activation = Activation::Identity;
        p.entity_emb.row_mut(0).copy_from_slice(&[f64::MAX, f64::MAX]);
        p.layers[0].w_loop = Matrix::from_rows(&[&[2.0, 2.0], &[2.0, 2.0]]);
        let adj = Adjacency::from_triples(1, 1, &[]);
        assert!(matches!(encode(&p, &adj), Err(Error::Numeric(_))));
    }
}
