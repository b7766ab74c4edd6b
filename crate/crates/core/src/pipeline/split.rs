use std::ops::Range;

use crate::error::{Error, Result};

pub const TRAIN_FRACTION: f64 = 0.8;
pub const VAL_FRACTION: f64 = 0.1;
pub const MIN_RECORDS: usize = 10;

/// Contiguous train, validation and test ranges over time-sorted records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.test.end
    }

    pub fn is_empty(&self) -> bool {
        self.test.end == 0
    }
}

/// 80/10/10 split by position: train is the first `round(0.8 n)` records, validation runs
/// up to `round(0.9 n)`, test is the rest.
pub fn timeline_split(n: usize) -> Result<Split> {
    if n < MIN_RECORDS {
        return Err(Error::Data(format!("{n} records, need at least {MIN_RECORDS} to split")));
    }
    let train = (TRAIN_FRACTION * n as f64).round() as usize;
    let val = ((TRAIN_FRACTION + VAL_FRACTION) * n as f64).round() as usize;
    Ok(Split {
        train: 0..train,
        val: train..val,
        test: val..n,
    })
}
