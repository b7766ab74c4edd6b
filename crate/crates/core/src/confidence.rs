//! Interaction-confidence vectors added to neighbour embeddings.
//!
//! Positions are window-relative: for a window with `L` live neighbours the `l`-th
//! (1-based, oldest first) receives `exp(l − L − 1)·cos((i − 1)π/H)` in unit `i`.
//! Because the row depends on `L`, tables hold one row per `(L, l)` pair with
//! `l ≤ L ≤ k`; row index `(L − 1)·k + (l − 1)`. Rows with `l > L` are never read.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{axpy, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConfidenceVariant {
    None,
    /// Sinusoidal positional encoding, fixed.
    Pe,
    /// Decay formula, fixed.
    Fce,
    /// Random initialisation, trained.
    Rce,
    /// Decay formula initialisation, trained.
    Ce,
}

impl ConfidenceVariant {
    pub const ALL: [ConfidenceVariant; 5] = [
        ConfidenceVariant::None,
        ConfidenceVariant::Pe,
        ConfidenceVariant::Fce,
        ConfidenceVariant::Rce,
        ConfidenceVariant::Ce,
    ];

    pub fn trainable(self) -> bool {
        matches!(self, ConfidenceVariant::Rce | ConfidenceVariant::Ce)
    }
}

impl fmt::Display for ConfidenceVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConfidenceVariant::None => "none",
            ConfidenceVariant::Pe => "pe",
            ConfidenceVariant::Fce => "fce",
            ConfidenceVariant::Rce => "rce",
            ConfidenceVariant::Ce => "ce",
        })
    }
}

impl FromStr for ConfidenceVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => ConfidenceVariant::None,
            "pe" => ConfidenceVariant::Pe,
            "fce" => ConfidenceVariant::Fce,
            "rce" => ConfidenceVariant::Rce,
            "ce" => ConfidenceVariant::Ce,
            other => return Err(Error::Config(format!("unknown confidence variant {other:?}"))),
        })
    }
}

/// Decay value for neighbour `l` of `L` at unit `i` (all 1-based) of width `h`.
pub fn decay_value(l: usize, live: usize, i: usize, h: usize) -> f64 {
    (l as f64 - live as f64 - 1.0).exp() * ((i as f64 - 1.0) * PI / h as f64).cos()
}

fn positional_value(pos: usize, unit: usize, h: usize) -> f64 {
    let pair = (unit / 2) * 2;
    let angle = pos as f64 / 10000f64.powf(pair as f64 / h as f64);
    if unit.is_multiple_of(2) {
        angle.sin()
    } else {
        angle.cos()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceTable {
    pub variant: ConfidenceVariant,
    pub max_len: usize,
    pub values: Matrix,
}

impl ConfidenceTable {
    pub fn build<R: Rng + ?Sized>(variant: ConfidenceVariant, max_len: usize, width: usize, rng: &mut R) -> Result<Self> {
        if max_len == 0 || width == 0 {
            return Err(Error::Domain("confidence table needs k ≥ 1 and H ≥ 1".into()));
        }
        let mut values = Matrix::zeros(max_len * max_len, width);
        for live in 1..=max_len {
            for l in 1..=live {
                let row = values.row_mut((live - 1) * max_len + (l - 1));
                for (unit, v) in row.iter_mut().enumerate() {
                    *v = match variant {
                        ConfidenceVariant::None => 0.0,
                        ConfidenceVariant::Pe => positional_value(l - 1, unit, width),
                        ConfidenceVariant::Fce | ConfidenceVariant::Ce => decay_value(l, live, unit + 1, width),
                        ConfidenceVariant::Rce => rng.gen_range(-0.01..=0.01),
                    };
                }
            }
        }
        Ok(ConfidenceTable {
            variant,
            max_len,
            values,
        })
    }

    pub fn zeros_like(&self) -> Self {
        ConfidenceTable {
            variant: self.variant,
            max_len: self.max_len,
            values: Matrix::zeros(self.values.rows(), self.values.cols()),
        }
    }

    pub fn width(&self) -> usize {
        self.values.cols()
    }

    pub fn row_index(&self, l: usize, live: usize) -> usize {
        (live - 1) * self.max_len + (l - 1)
    }

    pub fn row(&self, l: usize, live: usize) -> &[f64] {
        self.values.row(self.row_index(l, live))
    }

    /// Adds the confidence row to each live neighbour. The `j`-th live slot (in slot
    /// order) is position `l = j`; dead slots are left untouched.
    pub fn apply(&self, rows: &mut [Vec<f64>], mask: &[bool]) -> Result<()> {
        if rows.len() != mask.len() || rows.len() > self.max_len {
            return Err(Error::shape("apply_confidence", (self.max_len, self.width()), (rows.len(), mask.len())));
        }
        if self.variant == ConfidenceVariant::None {
            return Ok(());
        }
        let live = mask.iter().filter(|&&m| m).count();
        let mut l = 0;
        for (row, &m) in rows.iter_mut().zip(mask) {
            if !m {
                continue;
            }
            if row.len() != self.width() {
                return Err(Error::shape("apply_confidence", (1, self.width()), (1, row.len())));
            }
            l += 1;
            axpy(1.0, self.row(l, live), row);
        }
        Ok(())
    }

    /// Backward of [`apply`](Self::apply) into a gradient table of the same shape.
    pub fn accumulate(&mut self, grads: &[Vec<f64>], mask: &[bool]) {
        let live = mask.iter().filter(|&&m| m).count();
        let mut l = 0;
        for (g, &m) in grads.iter().zip(mask) {
            if !m {
                continue;
            }
            l += 1;
            let idx = self.row_index(l, live);
            axpy(1.0, g, self.values.row_mut(idx));
        }
    }
}
