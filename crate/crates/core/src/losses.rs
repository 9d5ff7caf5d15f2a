//! Focal loss for compatibility prediction and the set-based ranking loss
//! (all-negative mean hinge plus hardest-negative hinge) for retrieval.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{l2_norm, Scalar};

/// Clamp applied to probabilities before taking logs.
pub const PROB_EPS: f64 = 1e-7;
/// Tolerance on `||v|| = 1` for distance inputs.
pub const UNIT_NORM_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    SquaredEuclideanOnUnitVectors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub gamma: f64,
    pub margin: f64,
    pub n_negatives: usize,
    pub distance: DistanceKind,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 2.0,
            margin: 0.2,
            n_negatives: 8,
            distance: DistanceKind::SquaredEuclideanOnUnitVectors,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "loss.gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!(
                "loss.margin must be >= 0, got {}",
                self.margin
            )));
        }
        if self.n_negatives == 0 {
            return Err(Error::Config("loss.n_negatives must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocalOutput<T> {
    /// Sum over the batch.
    pub loss: T,
    /// Derivative of `loss` with respect to each prediction.
    pub grad: Vec<T>,
}

/// `sum_i (1 - p_i)^gamma * (-ln p_i)` where `p_i` is the probability given
/// to the true class. Predictions are clamped to `[eps, 1 - eps]`; the
/// gradient is zero where the clamp is active.
pub fn focal_loss<T: Scalar>(predicted: &[T], labels: &[u8], gamma: T) -> Result<FocalOutput<T>> {
    if predicted.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    let eps = T::of(PROB_EPS);
    let one = T::one();
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(predicted.len());
    for (i, (&c, &y)) in predicted.iter().zip(labels).enumerate() {
        let (raw, sign) = match y {
            1 => (c, one),
            0 => (one - c, -one),
            other => {
                return Err(Error::Validation(format!(
                    "label at index {i} must be 0 or 1, got {other}"
                )))
            }
        };
        let clamped = raw < eps || raw > one - eps;
        let p = raw.max(eps).min(one - eps);
        let q = one - p;
        let ln_p = p.ln();
        loss += q.powf(gamma) * -ln_p;
        let g = if clamped {
            T::zero()
        } else {
            // d/dp [-(1-p)^g ln p] = g (1-p)^(g-1) ln p - (1-p)^g / p
            let focus = if gamma == T::zero() {
                T::zero()
            } else {
                gamma * q.powf(gamma - one) * ln_p
            };
            focus - q.powf(gamma) / p
        };
        grad.push(sign * g);
    }
    Ok(FocalOutput { loss, grad })
}

/// `||a - b||^2` without norm checks.
#[inline]
pub fn squared_euclidean<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

pub fn check_unit<T: Scalar>(v: &[T], what: &str) -> Result<()> {
    let n = l2_norm(v).f64();
    if (n - 1.0).abs() > UNIT_NORM_TOL || !n.is_finite() {
        return Err(Error::Validation(format!(
            "{what} must be unit-norm, has norm {n}"
        )));
    }
    Ok(())
}

/// Squared Euclidean distance between unit vectors, `2 (1 - cos(a, b))`, in `[0, 4]`.
pub fn distance<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::Validation(format!(
            "distance between vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    check_unit(a, "distance argument a")?;
    check_unit(b, "distance argument b")?;
    Ok(squared_euclidean(a, b))
}

/// Ranking loss evaluated on precomputed distances.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingTerms<T> {
    pub total: T,
    pub all: T,
    pub hard: T,
    /// Index of the closest negative (lowest index on ties).
    pub hardest: usize,
    pub d_positive: T,
    pub d_negatives: Vec<T>,
}

/// `L_all = mean_j [d_p - d_j + m]_+`, `L_hard = [d_p - min_j d_j + m]_+`.
/// Derivatives are with respect to `d_p` and each `d_j`; a hinge at exactly
/// zero is treated as inactive.
pub fn ranking_terms<T: Scalar>(d_pos: T, d_negs: &[T], margin: T) -> Result<RankingTerms<T>> {
    if d_negs.is_empty() {
        return Err(Error::Validation(
            "ranking loss needs at least one negative".into(),
        ));
    }
    let inv_n = T::one() / T::of(d_negs.len() as f64);
    let mut all = T::zero();
    let mut d_positive = T::zero();
    let mut d_negatives = vec![T::zero(); d_negs.len()];
    let mut hardest = 0;
    for (j, &dj) in d_negs.iter().enumerate() {
        let x = d_pos - dj + margin;
        if x > T::zero() {
            all += x;
            d_positive += inv_n;
            d_negatives[j] -= inv_n;
        }
        if dj < d_negs[hardest] {
            hardest = j;
        }
    }
    all /= T::of(d_negs.len() as f64);
    let xh = d_pos - d_negs[hardest] + margin;
    let hard = if xh > T::zero() {
        d_positive += T::one();
        d_negatives[hardest] -= T::one();
        xh
    } else {
        T::zero()
    };
    Ok(RankingTerms {
        total: all + hard,
        all,
        hard,
        hardest,
        d_positive,
        d_negatives,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingOutput<T> {
    pub loss: T,
    pub all: T,
    pub hard: T,
    pub grad_t: Vec<T>,
    pub grad_positive: Vec<T>,
    pub grad_negatives: Vec<Vec<T>>,
}

/// Set-based ranking loss on unit vectors with gradients for every input.
pub fn ranking_loss<T: Scalar, V: AsRef<[T]>>(
    t: &[T],
    positive: &[T],
    negatives: &[V],
    margin: T,
) -> Result<RankingOutput<T>> {
    if negatives.is_empty() {
        return Err(Error::Validation(
            "ranking loss needs at least one negative".into(),
        ));
    }
    let d_pos = distance(t, positive)?;
    let d_negs = negatives
        .iter()
        .map(|n| distance(t, n.as_ref()))
        .collect::<Result<Vec<T>>>()?;
    let terms = ranking_terms(d_pos, &d_negs, margin)?;

    // d ||a - b||^2 / da = 2 (a - b)
    let two = T::of(2.0);
    let mut grad_t = vec![T::zero(); t.len()];
    let mut grad_positive = vec![T::zero(); t.len()];
    for k in 0..t.len() {
        let diff = two * (t[k] - positive[k]) * terms.d_positive;
        grad_t[k] += diff;
        grad_positive[k] = -diff;
    }
    let grad_negatives = negatives
        .iter()
        .zip(&terms.d_negatives)
        .map(|(n, &w)| {
            let n = n.as_ref();
            (0..t.len())
                .map(|k| {
                    let diff = two * (t[k] - n[k]) * w;
                    grad_t[k] += diff;
                    -diff
                })
                .collect()
        })
        .collect();
    Ok(RankingOutput {
        loss: terms.total,
        all: terms.all,
        hard: terms.hard,
        grad_t,
        grad_positive,
        grad_negatives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn focal_reference_values() {
        let out = focal_loss(&[1.0f64], &[1], 2.0).unwrap();
        assert!(out.loss < 1e-12 && out.loss >= 0.0);
        let ce = focal_loss(&[0.5f64], &[1], 0.0).unwrap();
        assert!(close(ce.loss, core::f64::consts::LN_2, 1e-12));
        let focal = focal_loss(&[0.5f64], &[1], 2.0).unwrap();
        assert!(close(focal.loss, 0.25 * core::f64::consts::LN_2, 1e-12));
        assert!(close(focal.loss, 0.1733, 5e-5));
        let neg = focal_loss(&[0.5f64], &[0], 2.0).unwrap();
        assert!(close(neg.loss, focal.loss, 1e-15));
    }

    #[test]
    fn focal_rejects_bad_labels() {
        assert!(matches!(
            focal_loss(&[0.3f64], &[2], 2.0),
            Err(Error::Validation(_))
        ));
        assert!(focal_loss(&[0.3f64, 0.2], &[1], 2.0).is_err());
    }

    #[test]
    fn focal_gradient_matches_fd() {
        let h = 1e-6;
        for &gamma in &[0.0, 0.5, 2.0, 3.5] {
            for &(c, y) in &[(0.3f64, 1u8), (0.8, 0), (0.05, 1), (0.97, 1)] {
                let g = focal_loss(&[c], &[y], gamma).unwrap().grad[0];
                let f = |x: f64| focal_loss(&[x], &[y], gamma).unwrap().loss;
                let n = (f(c + h) - f(c - h)) / (2.0 * h);
                assert!(
                    (g - n).abs() <= 1e-6 * n.abs().max(1.0),
                    "gamma={gamma} c={c} y={y}: {g} vs {n}"
                );
            }
        }
    }

    #[test]
    fn distance_reference_values() {
        let a = [1.0f64, 0.0];
        let b = [0.0f64, 1.0];
        let c = [-1.0f64, 0.0];
        assert_eq!(distance(&a, &a).unwrap(), 0.0);
        assert!(close(distance(&a, &b).unwrap(), 2.0, 1e-15));
        assert!(close(distance(&a, &c).unwrap(), 4.0, 1e-15));
        assert!(distance(&[2.0f64, 0.0], &a).is_err());
    }

    #[test]
    fn ranking_reference_values() {
        let r = ranking_terms(0.1f64, &[0.5], 0.2).unwrap();
        assert_eq!((r.all, r.hard, r.total), (0.0, 0.0, 0.0));
        let r = ranking_terms(0.4f64, &[0.3, 0.6], 0.2).unwrap();
        assert!(close(r.all, 0.15, 1e-12));
        assert!(close(r.hard, 0.3, 1e-12));
        assert!(close(r.total, 0.45, 1e-12));
        assert!(ranking_terms::<f64>(0.4, &[], 0.2).is_err());
    }

    #[test]
    fn hardest_ties_pick_lowest_index() {
        let r = ranking_terms(1.0f64, &[0.5, 0.2, 0.2], 0.1).unwrap();
        assert_eq!(r.hardest, 1);
    }

    #[test]
    fn ranking_loss_needs_negatives() {
        let t = [1.0f64, 0.0];
        let empty: [&[f64]; 0] = [];
        assert!(ranking_loss(&t, &t, &empty, 0.2).is_err());
    }

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn ranking_gradients_match_fd() {
        let t = unit(vec![0.3, -0.2, 0.9, 0.1]);
        let p = unit(vec![-0.5, 0.4, 0.2, 0.6]);
        let negs = vec![
            unit(vec![0.2, 0.1, 0.8, -0.3]),
            unit(vec![0.9, 0.1, 0.1, 0.2]),
        ];
        let m = 1.5;
        let out = ranking_loss(&t, &p, &negs, m).unwrap();
        // Raw squared distances are differentiated here; the vectors are not
        // re-normalized, matching the closed-form gradient.
        let loss = |t: &[f64], p: &[f64], n: &[Vec<f64>]| {
            let dn: Vec<f64> = n.iter().map(|x| squared_euclidean(t, x)).collect();
            ranking_terms(squared_euclidean(t, p), &dn, m)
                .unwrap()
                .total
        };
        let h = 1e-6;
        for k in 0..4 {
            let mut tp = t.clone();
            tp[k] += h;
            let mut tm = t.clone();
            tm[k] -= h;
            let fd = (loss(&tp, &p, &negs) - loss(&tm, &p, &negs)) / (2.0 * h);
            assert!((fd - out.grad_t[k]).abs() < 1e-6);
            let mut pp = p.clone();
            pp[k] += h;
            let mut pm = p.clone();
            pm[k] -= h;
            let fd = (loss(&t, &pp, &negs) - loss(&t, &pm, &negs)) / (2.0 * h);
            assert!((fd - out.grad_positive[k]).abs() < 1e-6);
            for j in 0..2 {
                let mut np = negs.clone();
                np[j][k] += h;
                let mut nm = negs.clone();
                nm[j][k] -= h;
                let fd = (loss(&t, &p, &np) - loss(&t, &p, &nm)) / (2.0 * h);
                assert!((fd - out.grad_negatives[j][k]).abs() < 1e-6);
            }
        }
    }

    proptest! {
        #[test]
        fn ranking_structure(
            d_pos in 0.0f64..4.0,
            negs in proptest::collection::vec(0.0f64..4.0, 1..8),
            m in 0.0f64..1.0,
            bump in 0.0f64..1.0,
        ) {
            let r = ranking_terms(d_pos, &negs, m).unwrap();
            prop_assert!(r.total >= r.all && r.total >= r.hard);
            let max_term = negs.iter().map(|d| (d_pos - d + m).max(0.0)).fold(0.0, f64::max);
            prop_assert!(r.hard >= max_term - 1e-12);
            prop_assert!(max_term >= r.all - 1e-12);
            let farther = ranking_terms(d_pos + bump, &negs, m).unwrap();
            prop_assert!(farther.total >= r.total);
            let mut rev = negs.clone();
            rev.reverse();
            let rr = ranking_terms(d_pos, &rev, m).unwrap();
            prop_assert!((rr.total - r.total).abs() <= 1e-12);
            if negs.len() == 1 {
                prop_assert_eq!(r.all, r.hard);
            }
        }

        #[test]
        fn focal_gamma_zero_is_bce(p in 1e-4f64..(1.0 - 1e-4), y in 0u8..2) {
            let out = focal_loss(&[p], &[y], 0.0).unwrap();
            let bce = if y == 1 { -p.ln() } else { -(1.0 - p).ln() };
            prop_assert!((out.loss - bce).abs() <= 1e-9);
            prop_assert!(out.loss >= 0.0);
        }
    }
}
