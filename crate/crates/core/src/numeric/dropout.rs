use rand::Rng;

use crate::error::{Error, Result};

/// Inverted-dropout scaling vector: kept units carry `1 / (1 − ratio)`, dropped units 0.
/// In evaluation mode the mask is all ones.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, ratio: f64, train: bool, rng: &mut R) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::Domain(format!("dropout ratio {ratio} outside [0, 1)")));
    }
    if !train || ratio == 0.0 {
        return Ok(vec![1.0; len]);
    }
    let keep = 1.0 / (1.0 - ratio);
    Ok((0..len)
        .map(|_| if rng.gen::<f64>() < ratio { 0.0 } else { keep })
        .collect())
}
