//! AUC, long-tail slices and the ablation runner.

pub mod ablation;
pub mod auc;

pub use ablation::{
    fingerprint, format_table, mean_std, run_ablation, run_ablation_with, summarize, AblationMatrix, AblationResult, Summary,
    TABLE_HEADER,
};
pub use auc::{auc, longtail_auc, ScoredSet, SliceAuc};

use crate::error::Result;
use crate::model::PigatParams;
use crate::pipeline::Prepared;

/// Item-degree thresholds of the long-tail slices.
pub const LONGTAIL_THRESHOLDS: [usize; 3] = [3, 5, 10];

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub count: usize,
    pub auc: SliceAuc,
    pub slices: Vec<(usize, SliceAuc, usize)>,
}

impl EvalReport {
    pub fn from_scored(set: &ScoredSet) -> Self {
        EvalReport {
            count: set.len(),
            auc: longtail_auc(set, None),
            slices: LONGTAIL_THRESHOLDS
                .iter()
                .map(|&k| (k, longtail_auc(set, Some(k)), set.filter_degree(k).len()))
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("instances\t{}\nauc\t{}\n", self.count, self.auc);
        for (k, v, n) in &self.slices {
            out.push_str(&format!("auc@degree<={k}\t{v}\t({n} instances)\n"));
        }
        out
    }
}

/// Scores the test split of `prepared` with `params`.
pub fn evaluate_test(params: &PigatParams, prepared: &Prepared) -> Result<EvalReport> {
    Ok(EvalReport::from_scored(&prepared.scored(params, prepared.split.test.clone())?))
}
