//! Vose alias method: O(n) construction, O(1) draws from a categorical
//! distribution.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// Builds a table from non-negative weights (not necessarily normalized).
    pub fn new(weights: &[f64]) -> Result<AliasTable> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter(
                "alias table needs at least one outcome".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite())
        {
            return Err(Error::InvalidParameter(
                "alias table weights must be non-negative, finite, with positive sum".into(),
            ));
        }
        let n = weights.len();
        let mut prob: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut alias = vec![0u32; n];

        let mut small: Vec<u32> = Vec::new();
        let mut large: Vec<u32> = Vec::new();
        for (i, p) in prob.iter().enumerate() {
            if *p < 1.0 {
                small.push(i as u32);
            } else {
                large.push(i as u32);
            }
        }
        while let (Some(s), Some(l)) = (small.pop(), large.pop()) {
            alias[s as usize] = l;
            prob[l as usize] -= 1.0 - prob[s as usize];
            if prob[l as usize] < 1.0 {
                small.push(l);
            } else {
                large.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in large.into_iter().chain(small) {
            prob[i as usize] = 1.0;
            alias[i as usize] = i;
        }
        Ok(AliasTable { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    /// Draws an outcome index.
    #[inline]
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let i = rng.gen_range(0..self.prob.len());
        if rng.gen::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }

    /// Reconstructs the effective outcome probabilities encoded by the table.
    pub fn outcome_probabilities(&self) -> Vec<f64> {
        let n = self.prob.len();
        let mut p = vec![0.0f64; n];
        for i in 0..n {
            p[i] += self.prob[i];
            if self.alias[i] as usize != i {
                p[self.alias[i] as usize] += 1.0 - self.prob[i];
            }
        }
        for v in &mut p {
            *v /= n as f64;
        }
        p
    }
}
