//! Superellipsoid geometry.
//!
//! A superellipsoid with centre `u_c`, positive diagonal scale `L` and
//! squareness `K` is `{ L w + u_c : sum_i |w_i|^n <= 1 }` with `n = 2^K`. As
//! `K` grows it approaches the box `u_c ± L`; the largest axis-aligned box
//! inside it has half-widths `L_ii * v^(-1/n)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest squareness accepted by [`select_k`].
pub const MAX_SQUARENESS: u32 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Superellipsoid {
    pub center: Vec<f64>,
    /// Diagonal of `L`.
    pub scale: Vec<f64>,
    pub squareness: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    pub inside: bool,
    /// `sum_i |(p_i - u_c(i)) / L_ii|^n`.
    pub sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InscribedBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub volume: f64,
}

impl Superellipsoid {
    pub fn new(center: Vec<f64>, scale: Vec<f64>, squareness: u32) -> Result<Self> {
        if center.len() != scale.len() || center.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "centre has {} entries but scale has {}",
                center.len(),
                scale.len()
            )));
        }
        if scale.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidConfig("scale entries must be positive and finite".into()));
        }
        if squareness == 0 {
            return Err(Error::InvalidConfig("squareness K must be at least 1".into()));
        }
        Ok(Superellipsoid {
            center,
            scale,
            squareness,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn exponent(&self) -> f64 {
        2f64.powi(self.squareness as i32)
    }

    pub fn membership(&self, p: &[f64]) -> Membership {
        assert_eq!(p.len(), self.dim(), "point dimension mismatch");
        let n = self.exponent();
        let sum = p
            .iter()
            .zip(&self.center)
            .zip(&self.scale)
            .map(|((&pi, &c), &l)| {
                let w = ((pi - c) / l).abs();
                // |w|^n through exp/log so huge n neither overflows early nor loses w = 0
                if w == 0.0 {
                    0.0
                } else {
                    (n * w.ln()).exp()
                }
            })
            .sum::<f64>();
        Membership {
            inside: sum <= 1.0,
            sum,
        }
    }

    pub fn inscribed_box(&self) -> InscribedBox {
        let w = corner_factor(self.dim(), self.squareness);
        let lower = self
            .center
            .iter()
            .zip(&self.scale)
            .map(|(c, l)| c - l * w)
            .collect();
        let upper = self
            .center
            .iter()
            .zip(&self.scale)
            .map(|(c, l)| c + l * w)
            .collect();
        let volume = (2.0 * w).powi(self.dim() as i32) * self.scale.iter().product::<f64>();
        InscribedBox {
            lower,
            upper,
            volume,
        }
    }
}

/// Per-axis half-width multiplier `v^(-1/2^K)` of the largest box inside a
/// superellipsoid.
pub fn corner_factor(v: usize, k: u32) -> f64 {
    assert!(v >= 1 && k >= 1);
    (-(v as f64).ln() / 2f64.powi(k as i32)).exp()
}

/// `1 - S_h / S̄_h = 1 - v^(-1/2^K)`: the share of the box-limit total DOE
/// lost by using squareness `K`.
pub fn relative_gap(v: usize, k: u32) -> f64 {
    // -expm1(-x) keeps precision when the gap is tiny
    -(-(v as f64).ln() / 2f64.powi(k as i32)).exp_m1()
}

/// Smallest `K >= 1` whose relative gap is at most `theta`.
pub fn select_k(v: usize, theta: f64) -> Result<u32> {
    if v == 0 {
        return Err(Error::InvalidConfig("need at least one active customer".into()));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidConfig(format!("theta must lie in (0, 1), got {theta}")));
    }
    (1..=MAX_SQUARENESS)
        .find(|&k| relative_gap(v, k) <= theta)
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "no K <= {MAX_SQUARENESS} reaches relative gap {theta} for {v} customers"
            ))
        })
}

/// The chain of quadratic links `y_{k,i}^2 <= y_{k+1,i}` (k < K) and terminal
/// ball `||y_K||_2 <= 1` whose projection onto `y_1` is the unit `2^K`-norm
/// ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TowerSpec {
    pub squareness: u32,
    pub dim: usize,
}

impl TowerSpec {
    pub fn new(squareness: u32, dim: usize) -> Self {
        assert!(squareness >= 1 && dim >= 1);
        TowerSpec { squareness, dim }
    }

    /// Scalar links plus the terminal ball: `dim * (K - 1) + 1`.
    pub fn quadratic_constraint_count(&self) -> usize {
        self.dim * (self.squareness as usize - 1) + 1
    }

    /// Levels `y_1 .. y_K` with every link tight (`y_{k+1,i} = y_{k,i}^2`).
    pub fn lift(&self, y1: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(y1.len(), self.dim);
        let mut levels = vec![y1.to_vec()];
        for _ in 1..self.squareness {
            let next = levels.last().unwrap().iter().map(|y| y * y).collect();
            levels.push(next);
        }
        levels
    }

    /// Checks every link and the terminal ball for the given levels.
    pub fn is_feasible(&self, levels: &[Vec<f64>], tol: f64) -> bool {
        if levels.len() != self.squareness as usize || levels.iter().any(|l| l.len() != self.dim) {
            return false;
        }
        let links = levels
            .windows(2)
            .all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| a * a <= b + tol));
        let last = levels.last().unwrap();
        links && last.iter().map(|y| y * y).sum::<f64>().sqrt() <= 1.0 + tol
    }
}
