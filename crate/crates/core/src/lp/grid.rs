use serde::Serialize;

use crate::error::{Result, SchedError};

/// Geometric time intervals `I_0 = [0,1]`, `I_ℓ = ((1+η)^{ℓ-1}, (1+η)^ℓ]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalGrid {
    eta: f64,
    last: usize,
    lengths: Vec<f64>,
    right: Vec<f64>,
}

impl IntervalGrid {
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Index `L` of the last interval.
    pub fn last(&self) -> usize {
        self.last
    }

    /// Number of intervals, `L + 1`.
    pub fn len(&self) -> usize {
        self.last + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn length(&self, l: usize) -> f64 {
        self.lengths[l]
    }

    pub fn right(&self, l: usize) -> f64 {
        self.right[l]
    }

    /// Left endpoint: 0 for `I_0`, `(1+η)^{ℓ-1}` otherwise.
    pub fn left(&self, l: usize) -> f64 {
        if l == 0 {
            0.0
        } else {
            self.right[l - 1]
        }
    }

    /// Start-time proxy used inside the completion-time lower bound; equals the
    /// left endpoint except for `I_0`, where it is fixed at 1/2.
    pub fn anchor(&self, l: usize) -> f64 {
        if l == 0 {
            0.5
        } else {
            self.right[l - 1]
        }
    }

    /// Total covered time, `(1+η)^L`.
    pub fn horizon(&self) -> f64 {
        self.right[self.last]
    }
}

/// Smallest `L ≥ 0` with `(1+η)^L ≥ total_rst`, i.e. `⌈log_{1+η} Σ τ⌉` clamped at 0.
pub fn build_grid(total_rst: f64, eta: f64) -> Result<IntervalGrid> {
    if !(total_rst > 0.0 && total_rst.is_finite()) {
        return Err(SchedError::Domain(format!("total rst must be positive, got {total_rst}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(SchedError::Domain(format!("eta must be positive, got {eta}")));
    }
    let base = 1.0 + eta;
    let target = total_rst * (1.0 - 1e-12);
    let mut last = 0usize;
    while base.powi(last as i32) < target {
        last += 1;
    }
    let mut lengths = Vec::with_capacity(last + 1);
    let mut right = Vec::with_capacity(last + 1);
    lengths.push(1.0);
    right.push(1.0);
    for l in 1..=last {
        lengths.push(eta * base.powi(l as i32 - 1));
        right.push(base.powi(l as i32));
    }
    Ok(IntervalGrid {
        eta,
        last,
        lengths,
        right,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let g = build_grid(1.0, 0.5).unwrap();
        assert_eq!(g.last(), 0);
        assert_eq!(g.lengths(), &[1.0]);

        let g = build_grid(8.0, 1.0).unwrap();
        assert_eq!(g.last(), 3);
        assert_eq!(g.lengths(), &[1.0, 1.0, 2.0, 4.0]);
        assert_eq!((0..4).map(|l| g.right(l)).collect::<Vec<_>>(), vec![1.0, 2.0, 4.0, 8.0]);
        assert_eq!(g.left(0), 0.0);
        assert_eq!(g.anchor(0), 0.5);
        assert_eq!(g.left(2), 2.0);

        let g = build_grid(600.0, 0.5).unwrap();
        assert_eq!(g.last(), 16);
        assert_eq!(g.last(), (600f64.ln() / 1.5f64.ln()).ceil() as usize);
    }

    #[test]
    fn small_totals_clamp_to_zero() {
        assert_eq!(build_grid(0.3, 0.5).unwrap().last(), 0);
    }

    #[test]
    fn capacity_covers_total() {
        for &total in &[1.5, 7.0, 42.0, 1234.5] {
            for &eta in &[0.3, 0.5, 1.0, 2.0] {
                let g = build_grid(total, eta).unwrap();
                let sum: f64 = g.lengths().iter().sum();
                assert!((sum - g.horizon()).abs() <= 1e-9 * sum);
                assert!(sum >= total * (1.0 - 1e-12));
                if g.last() > 0 {
                    assert!(g.right(g.last() - 1) < total);
                }
            }
        }
    }

    #[test]
    fn domain_errors() {
        assert!(build_grid(0.0, 0.5).is_err());
        assert!(build_grid(-1.0, 0.5).is_err());
        assert!(build_grid(1.0, 0.0).is_err());
    }
}
