//! Flat parameter vectors and the two geometric transforms applied to local
//! updates on the server: orthogonal projection onto the previous global
//! update, and adaptive rescaling of the resulting residual.
//!
//! Every vector in a simulation run shares one dimension `d`. Components are
//! always finite; any operation that would produce NaN or infinity returns
//! [`Error::NonFinite`] instead.

use std::ops::Index;

use crate::error::{Error, Result};

/// Default degeneracy threshold on vector norms.
pub const DEFAULT_EPS: f64 = 1e-12;

/// Dense vector of model parameters or parameter updates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(Error::NonFinite("ParamVector::new"))
        }
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    fn checked(values: Vec<f64>, op: &'static str) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(Self(values))
        } else {
            Err(Error::NonFinite(op))
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::checked(self.0.iter().map(|v| factor * v).collect(), "scale")
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dims(self, other)?;
        Self::checked(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
            "sub",
        )
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dims(self, other)?;
        Self::checked(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
            "add",
        )
    }

    /// `self - factor * other`
    pub fn sub_scaled(&self, factor: f64, other: &Self) -> Result<Self> {
        check_dims(self, other)?;
        Self::checked(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a - factor * b)
                .collect(),
            "sub_scaled",
        )
    }
}

impl Index<usize> for ParamVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_dims(a: &ParamVector, b: &ParamVector) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        })
    }
}

pub fn dot(a: &ParamVector, b: &ParamVector) -> Result<f64> {
    check_dims(a, b)?;
    Ok(a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum())
}

pub fn norm(a: &ParamVector) -> f64 {
    a.0.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Orthogonal projection of `update` onto the line spanned by `onto`.
///
/// A target with norm at most `eps` projects everything to zero.
pub fn project(update: &ParamVector, onto: &ParamVector, eps: f64) -> Result<ParamVector> {
    check_dims(update, onto)?;
    if norm(onto) <= eps {
        return Ok(ParamVector::zeros(update.len()));
    }
    let coef = dot(update, onto)? / dot(onto, onto)?;
    if !coef.is_finite() {
        return Err(Error::NonFinite("project"));
    }
    onto.scaled(coef)
        .map_err(|_| Error::NonFinite("project"))
}

/// Component of `update` orthogonal to `prev_global`.
pub fn residual(update: &ParamVector, prev_global: &ParamVector, eps: f64) -> Result<ParamVector> {
    let proj = project(update, prev_global, eps)?;
    update.sub(&proj)
}

/// Rescales `resid` by `lambda + |original| / |resid|`.
///
/// The norm ratio is the cosecant of the angle between the original update
/// and the projection target. A residual with norm at most `eps` yields the
/// zero vector.
pub fn adaptive_scale(
    original: &ParamVector,
    resid: &ParamVector,
    lambda: f64,
    eps: f64,
) -> Result<ParamVector> {
    check_dims(original, resid)?;
    let resid_norm = norm(resid);
    if resid_norm <= eps {
        return Ok(ParamVector::zeros(resid.len()));
    }
    let factor = scale_factor(norm(original), resid_norm, lambda);
    if !factor.is_finite() {
        return Err(Error::NonFinite("adaptive_scale"));
    }
    resid
        .scaled(factor)
        .map_err(|_| Error::NonFinite("adaptive_scale"))
}

#[inline]
pub fn scale_factor(original_norm: f64, resid_norm: f64, lambda: f64) -> f64 {
    lambda + original_norm / resid_norm
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    const EPS: f64 = DEFAULT_EPS;

    #[test]
    fn dot_examples() {
        assert_eq!(dot(&pv(&[1.0, 0.0]), &pv(&[0.0, 1.0])).unwrap(), 0.0);
        assert_eq!(dot(&pv(&[2.0, 3.0]), &pv(&[2.0, 3.0])).unwrap(), 13.0);
        assert_eq!(dot(&pv(&[3.0, 4.0]), &pv(&[1.0, 0.0])).unwrap(), 3.0);
    }

    #[test]
    fn dot_reports_both_lengths() {
        let err = dot(&pv(&[1.0, 2.0]), &pv(&[1.0, 2.0, 3.0])).unwrap_err();
        match err {
            Error::DimensionMismatch { left, right } => assert_eq!((left, right), (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn norm_examples() {
        assert_eq!(norm(&pv(&[0.0, 0.0, 0.0])), 0.0);
        assert_eq!(norm(&pv(&[3.0, 4.0])), 5.0);
        assert_eq!(norm(&pv(&[1.0, 1.0, 1.0, 1.0])), 2.0);
    }

    #[test]
    fn project_examples() {
        assert_eq!(project(&pv(&[3.0, 4.0]), &pv(&[1.0, 0.0]), EPS).unwrap(), pv(&[3.0, 0.0]));
        let v = pv(&[0.3, -1.7, 2.5]);
        let p = project(&v, &v, EPS).unwrap();
        for (a, b) in p.iter().zip(v.iter()) {
            assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
        assert_eq!(project(&pv(&[3.0, 4.0]), &pv(&[0.0, 0.0]), EPS).unwrap(), pv(&[0.0, 0.0]));
    }

    #[test]
    fn residual_examples() {
        assert_eq!(residual(&pv(&[3.0, 4.0]), &pv(&[1.0, 0.0]), EPS).unwrap(), pv(&[0.0, 4.0]));
        let v = pv(&[2.0, -4.0]);
        assert!(norm(&residual(&v, &v, EPS).unwrap()) <= 1e-15);
        assert_eq!(residual(&pv(&[3.0, 4.0]), &pv(&[0.0, 0.0]), EPS).unwrap(), pv(&[3.0, 4.0]));
    }

    #[test]
    fn adaptive_scale_examples() {
        let out = adaptive_scale(&pv(&[3.0, 4.0]), &pv(&[0.0, 4.0]), 1.0, EPS).unwrap();
        assert_eq!(out, pv(&[0.0, 9.0]));

        let u = pv(&[1.5, -2.0, 0.25]);
        for lambda in [-0.5, 0.0, 1.0, 3.0] {
            let out = adaptive_scale(&u, &u, lambda, EPS).unwrap();
            assert_eq!(out, u.scaled(lambda + 1.0).unwrap());
        }

        let z = adaptive_scale(&pv(&[3.0, 4.0]), &pv(&[0.0, 0.0]), 1.0, EPS).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(ParamVector::new(vec![1.0, f64::NAN]).is_err());
        let big = pv(&[f64::MAX, f64::MAX]);
        assert!(matches!(big.scaled(4.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn obtuse_angle_projection_is_negative_multiple() {
        let p = project(&pv(&[-3.0, 4.0]), &pv(&[1.0, 0.0]), EPS).unwrap();
        assert_eq!(p, pv(&[-3.0, 0.0]));
    }

    fn vec_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|d| {
            (
                prop::collection::vec(-100.0f64..100.0, d),
                prop::collection::vec(-100.0f64..100.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn residual_is_orthogonal((u, g) in vec_pair()) {
            let (u, g) = (pv(&u), pv(&g));
            prop_assume!(norm(&g) > EPS);
            let r = residual(&u, &g, EPS).unwrap();
            prop_assert!(dot(&r, &g).unwrap().abs() <= 1e-9 * norm(&u) * norm(&g) + 1e-300);
        }

        #[test]
        fn pythagoras_and_norm_ratio((u, g) in vec_pair()) {
            let (u, g) = (pv(&u), pv(&g));
            prop_assume!(norm(&g) > EPS);
            let p = project(&u, &g, EPS).unwrap();
            let r = residual(&u, &g, EPS).unwrap();
            let lhs = norm(&u).powi(2);
            let rhs = norm(&p).powi(2) + norm(&r).powi(2);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(f64::MIN_POSITIVE));
            if norm(&u) > EPS && norm(&r) > EPS {
                prop_assert!(norm(&u) / norm(&r) >= 1.0 - 1e-12);
            }
        }

        #[test]
        fn scale_preserves_direction_and_norm_identity(
            (u, g) in vec_pair(),
            lambda in -0.99f64..5.0,
        ) {
            let (u, g) = (pv(&u), pv(&g));
            let r = residual(&u, &g, EPS).unwrap();
            prop_assume!(norm(&r) > EPS);
            let s = adaptive_scale(&u, &r, lambda, EPS).unwrap();
            let factor = scale_factor(norm(&u), norm(&r), lambda);
            prop_assert!(factor > 0.0);
            // same direction: cosine is one
            let cos = dot(&s, &r).unwrap() / (norm(&s) * norm(&r));
            prop_assert!((cos - 1.0).abs() <= 1e-12);
            if lambda >= 0.0 {
                let expected = lambda * norm(&r) + norm(&u);
                prop_assert!((norm(&s) - expected).abs() <= 1e-12 * expected);
            }
        }

        #[test]
        fn projection_is_linear((a, g) in vec_pair(), seed in any::<u64>()) {
            let b: Vec<f64> = a.iter().enumerate()
                .map(|(i, x)| x * 0.5 + ((seed >> (i % 64)) & 7) as f64 - 3.0)
                .collect();
            let (a, b, g) = (pv(&a), pv(&b), pv(&g));
            prop_assume!(norm(&g) > EPS);
            let lhs = project(&a.add(&b).unwrap(), &g, EPS).unwrap();
            let rhs = project(&a, &g, EPS).unwrap().add(&project(&b, &g, EPS).unwrap()).unwrap();
            let scale = norm(&a) + norm(&b);
            for (x, y) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((x - y).abs() <= 1e-9 * scale.max(1.0));
            }
        }
    }
}
