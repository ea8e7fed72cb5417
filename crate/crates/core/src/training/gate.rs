use serde::{Deserialize, Serialize};

/// Which direction of distillation is allowed for one KG.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateState {
    /// Validation MRR of the individual model on its KG.
    pub mrr_individual: f64,
    /// Validation MRR of the fused model on the same KG's queries.
    pub mrr_fused_on_kg: f64,
    pub teach_i_to_f: bool,
    pub teach_f_to_i: bool,
}

impl GateState {
    pub fn new(mrr_individual: f64, mrr_fused_on_kg: f64) -> Self {
        Self {
            mrr_individual,
            mrr_fused_on_kg,
            teach_i_to_f: true,
            teach_f_to_i: true,
        }
    }
}

/// The better model always teaches; the worse one teaches only if its MRR is
/// less than `theta` below. Equal MRRs let both teach.
pub fn update_gate(state: GateState, theta: f64) -> GateState {
    let (i, f) = (state.mrr_individual, state.mrr_fused_on_kg);
    let gap = (i - f).abs();
    let worse_teaches = gap < theta;
    GateState {
        teach_i_to_f: i >= f || worse_teaches,
        teach_f_to_i: f >= i || worse_teaches,
        ..state
    }
}
