//! The homogeneous space S^{n-1} = SO(n)/SO(n-1): projection onto the coset
//! sphere, a deterministic section, the invariant measure, automorphisms
//! induced on the quotient, and the measure-disintegration check relating
//! group, subgroup, and quotient integrals.
//!
//! The subgroup K is SO(n-1) embedded as the block matrices fixing the last
//! basis vector e_n; the coset xK is identified with the unit vector x e_n.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{self, Automorphism, AutomorphismKind, Backend, GroupPoint};
use crate::mc::{self, McEstimate};

/// A point of the quotient sphere: a unit vector in R^n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomPoint {
    s: DVector<f64>,
}

impl HomPoint {
    /// Wrap a vector as a sphere point; the norm must already be within
    /// 1e-8 of one and is then normalized exactly.
    pub fn new(v: DVector<f64>) -> Result<HomPoint> {
        let norm = v.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-8 {
            return Err(Error::Domain(format!(
                "sphere point must be a unit vector (norm {norm})"
            )));
        }
        Ok(HomPoint { s: v / norm })
    }

    /// The pole e_n fixed by the subgroup.
    pub fn pole(n: usize) -> HomPoint {
        let mut v = DVector::zeros(n);
        v[n - 1] = 1.0;
        HomPoint { s: v }
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.s
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    /// The horizontal part (s_1, ..., s_{n-1}).
    pub fn horizontal(&self) -> DVector<f64> {
        self.s.rows(0, self.s.len() - 1).into_owned()
    }

    /// The last coordinate s_n.
    pub fn last(&self) -> f64 {
        self.s[self.s.len() - 1]
    }

    /// Geodesic (angular) distance on the sphere.
    pub fn distance(&self, other: &HomPoint) -> f64 {
        self.s.dot(&other.s).clamp(-1.0, 1.0).acos()
    }
}

/// The quotient SO(n)/SO(n-1) with its invariant probability measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuotientSpace {
    n: usize,
}

impl QuotientSpace {
    pub fn new(n: usize) -> Result<QuotientSpace> {
        if n < 2 {
            return Err(Error::Domain("quotient sphere needs ambient n >= 2".into()));
        }
        Ok(QuotientSpace { n })
    }

    /// Ambient group SO(n).
    pub fn ambient(&self) -> Backend {
        Backend::special_orthogonal(self.n)
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    /// Embed a rotation of R^{n-1} as the block matrix fixing e_n.
    pub fn embed_subgroup(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::identity(n, n);
        m.view_mut((0, 0), (n - 1, n - 1)).copy_from(a);
        m
    }

    /// Membership test for the embedded subgroup: last row and column equal
    /// e_n within 1e-10, and the matrix is special-orthogonal.
    pub fn is_in_subgroup(&self, x: &DMatrix<f64>) -> bool {
        let n = self.n;
        if !Backend::special_orthogonal(n).contains(&GroupPoint::Rotation(x.clone())) {
            return false;
        }
        let mut defect = (x[(n - 1, n - 1)] - 1.0).abs();
        for i in 0..n - 1 {
            defect = defect.max(x[(i, n - 1)].abs()).max(x[(n - 1, i)].abs());
        }
        defect <= 1e-10
    }

    /// Haar sample of the embedded subgroup.
    pub fn sample_subgroup(&self, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        self.embed_subgroup(&group::haar_rotation(self.n - 1, rng))
    }

    /// Natural projection: x maps to the coset point x e_n (last column).
    pub fn project(&self, x: &GroupPoint) -> HomPoint {
        let m = x.expect_rotation();
        HomPoint {
            s: m.column(self.n - 1).into_owned(),
        }
    }

    /// Deterministic section: a rotation x(s) with x(s) e_n = s.
    ///
    /// Built from a Householder reflection times a fixed sign flip, with the
    /// reflection axis chosen by the sign of s_n so each branch stays away
    /// from its singular pole; the antipode -e_n gets the fixed completion
    /// diag(-1, 1, ..., 1, -1).
    pub fn lift(&self, s: &HomPoint) -> GroupPoint {
        let n = self.n;
        let sn = s.last();
        let m = if sn > 0.0 {
            // x = H_w R1, w = s + e_n, R1 = diag(1,...,1,-1): maps e_n to s
            let mut w = s.s.clone();
            w[n - 1] += 1.0;
            let mut h = DMatrix::identity(n, n) - 2.0 / w.norm_squared() * (&w * w.transpose());
            for i in 0..n {
                h[(i, n - 1)] = -h[(i, n - 1)];
            }
            h
        } else {
            // x = H_v D, v = s - e_n, D = diag(-1,1,...,1): maps e_n to s
            let mut v = s.s.clone();
            v[n - 1] -= 1.0;
            let mut h = DMatrix::identity(n, n) - 2.0 / v.norm_squared() * (&v * v.transpose());
            for i in 0..n {
                h[(i, 0)] = -h[(i, 0)];
            }
            h
        };
        GroupPoint::Rotation(m)
    }

    /// Uniform point on the sphere (normalized Gaussian).
    pub fn uniform_point(&self, rng: &mut ChaCha8Rng) -> HomPoint {
        loop {
            let v = DVector::from_fn(self.n, |_, _| -> f64 { StandardNormal.sample(rng) });
            let norm = v.norm();
            if norm > 1e-6 {
                return HomPoint { s: v / norm };
            }
        }
    }

    /// I.i.d. points under the invariant probability measure, deterministic
    /// given `seed`; agrees in distribution with projecting Haar samples.
    pub fn invariant_sample(&self, count: usize, seed: u64) -> Result<Vec<HomPoint>> {
        if count == 0 {
            return Err(Error::Domain("invariant_sample needs count >= 1".into()));
        }
        Ok(mc::sample_stream(seed, count, |rng| self.uniform_point(rng)))
    }

    /// Screen an automorphism for subgroup preservation and wrap it as an
    /// action on the quotient.
    ///
    /// Conjugations get the exact structural test (the conjugating matrix
    /// must fix the pole axis); every automorphism is also screened on
    /// `screen_samples` Haar-sampled subgroup elements. Failure returns the
    /// witness element.
    pub fn induced_automorphism(
        &self,
        aut: &Automorphism,
        screen_samples: usize,
        seed: u64,
    ) -> Result<InducedAutomorphism> {
        if *aut.backend() != self.ambient() {
            return Err(Error::InvalidAutomorphism(
                "automorphism acts on a different backend than the quotient's ambient group".into(),
            ));
        }
        if let AutomorphismKind::Conjugation { by } = aut.kind() {
            let n = self.n;
            let mut axis_defect = 0.0f64;
            for i in 0..n - 1 {
                axis_defect = axis_defect.max(by[(i, n - 1)].abs());
            }
            if axis_defect > 1e-10 {
                return Err(Error::DoesNotNormalizeK {
                    witness: format!(
                        "conjugating matrix moves the pole axis (defect {axis_defect:.3e})"
                    ),
                });
            }
        }
        let mut rng = mc::block_rng(mc::derive_seed(seed, 0xA0), 0);
        for _ in 0..screen_samples.max(1) {
            let k = self.sample_subgroup(&mut rng);
            let image = aut.apply(&GroupPoint::Rotation(k.clone()));
            if !self.is_in_subgroup(image.expect_rotation()) {
                return Err(Error::DoesNotNormalizeK {
                    witness: format!("subgroup element {k:.4} maps outside the subgroup"),
                });
            }
        }
        Ok(InducedAutomorphism {
            quotient: *self,
            automorphism: aut.clone().with_preserves_k(),
        })
    }

    /// Both sides of the disintegration formula
    /// int_G g = int_{G/K} int_K g(xk) dk dlambda, estimated independently.
    pub fn weil_check<F>(&self, g: F, mc_samples: usize, seed: u64) -> Result<WeilReport>
    where
        F: Fn(&DMatrix<f64>) -> f64 + Sync,
    {
        let n = self.n;
        let lhs = mc::estimate_mean(mc::derive_seed(seed, 1), mc_samples, |rng| {
            g(&group::haar_rotation(n, rng))
        });
        let rhs = mc::estimate_mean(mc::derive_seed(seed, 2), mc_samples, |rng| {
            let s = self.uniform_point(rng);
            let k = self.sample_subgroup(rng);
            g(&(self.lift(&s).expect_rotation() * k))
        });
        let diff = (lhs.value - rhs.value).abs();
        let scale = lhs.value.abs().max(rhs.value.abs());
        let combined_sigma = lhs.combined_sigma(&rhs);
        let relative = scale > 1e-9;
        let discrepancy = if relative { diff / scale } else { diff };

        // right-K-invariance screen: g(xk) = g(x) pointwise
        let mut rng = mc::block_rng(mc::derive_seed(seed, 3), 0);
        let mut collapse_residual = 0.0f64;
        for _ in 0..16 {
            let x = group::haar_rotation(n, &mut rng);
            let k = self.sample_subgroup(&mut rng);
            collapse_residual = collapse_residual.max((g(&(&x * k)) - g(&x)).abs());
        }
        let right_k_invariant = collapse_residual <= 1e-12 * (1.0 + scale);
        // for right-K-invariant g the inner integral collapses and the
        // quotient side can be estimated without the subgroup factor
        let quotient_side = right_k_invariant.then(|| {
            mc::estimate_mean(mc::derive_seed(seed, 4), mc_samples, |rng| {
                let s = self.uniform_point(rng);
                g(self.lift(&s).expect_rotation())
            })
        });
        Ok(WeilReport {
            lhs,
            rhs,
            discrepancy,
            relative,
            combined_sigma,
            pass: diff <= 3.0 * combined_sigma + 1e-12,
            right_k_invariant,
            collapse_residual,
            quotient_side,
        })
    }
}

/// An automorphism screened for subgroup preservation, acting on the
/// quotient sphere.
#[derive(Debug, Clone)]
pub struct InducedAutomorphism {
    quotient: QuotientSpace,
    automorphism: Automorphism,
}

impl InducedAutomorphism {
    pub fn quotient(&self) -> &QuotientSpace {
        &self.quotient
    }

    /// The underlying group automorphism (with the preservation flag set).
    pub fn automorphism(&self) -> &Automorphism {
        &self.automorphism
    }

    /// Action on a sphere point: project(A(lift(s))). Conjugations by
    /// pole-fixing matrices g reduce to the closed form s -> g^{-1} s.
    pub fn apply(&self, s: &HomPoint) -> HomPoint {
        let n = self.quotient.n;
        if let AutomorphismKind::Conjugation { by } = self.automorphism.kind() {
            if (by[(n - 1, n - 1)] - 1.0).abs() <= 1e-12 {
                return HomPoint {
                    s: by.transpose() * &s.s,
                };
            }
        }
        let lifted = self.quotient.lift(s);
        self.quotient.project(&self.automorphism.apply(&lifted))
    }

    pub fn inverse(&self) -> InducedAutomorphism {
        InducedAutomorphism {
            quotient: self.quotient,
            automorphism: self.automorphism.inverse(),
        }
    }
}

/// Result of the measure-disintegration check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeilReport {
    pub lhs: McEstimate,
    pub rhs: McEstimate,
    /// Relative when the scale allows, absolute otherwise (see `relative`).
    pub discrepancy: f64,
    pub relative: bool,
    pub combined_sigma: f64,
    pub pass: bool,
    pub right_k_invariant: bool,
    /// Max pointwise residual |g(xk) - g(x)| over the invariance screen.
    pub collapse_residual: f64,
    /// Direct quotient-side estimate, present for right-K-invariant g.
    pub quotient_side: Option<McEstimate>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn planar_rotation(n: usize, i: usize, j: usize, angle: f64) -> DMatrix<f64> {
        let mut m = DMatrix::identity(n, n);
        m[(i, i)] = angle.cos();
        m[(j, j)] = angle.cos();
        m[(i, j)] = -angle.sin();
        m[(j, i)] = angle.sin();
        m
    }

    #[test]
    fn project_identity_is_pole() {
        let q = QuotientSpace::new(4).unwrap();
        let p = q.project(&q.ambient().identity());
        assert_eq!(p, HomPoint::pole(4));
    }

    #[test]
    fn project_is_coset_invariant() {
        let q = QuotientSpace::new(3).unwrap();
        let xs = group::haar_sample(&q.ambient(), 50, 2).unwrap();
        let mut rng = mc::block_rng(77, 0);
        for x in &xs {
            let k = q.sample_subgroup(&mut rng);
            let xk = GroupPoint::Rotation(x.expect_rotation() * k);
            let d = (q.project(x).coords() - q.project(&xk).coords()).norm();
            assert!(d <= 1e-12, "coset projection moved by {d}");
        }
    }

    #[test]
    fn project_quarter_turn_hits_first_axis() {
        let q = QuotientSpace::new(3).unwrap();
        let x = GroupPoint::Rotation(planar_rotation(3, 0, 2, PI / 2.0));
        let p = q.project(&x);
        // the quarter turn in the (1, n) plane sends e_n to +-e_1
        assert_relative_eq!(p.coords()[0].abs(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.coords()[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(p.coords()[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lift_pole_is_identity() {
        let q = QuotientSpace::new(5).unwrap();
        let x = q.lift(&HomPoint::pole(5));
        assert_relative_eq!(
            (x.expect_rotation() - DMatrix::identity(5, 5)).norm(),
            0.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn lift_antipode_uses_fixed_completion() {
        let q = QuotientSpace::new(3).unwrap();
        let mut v = DVector::zeros(3);
        v[2] = -1.0;
        let s = HomPoint::new(v).unwrap();
        let x = q.lift(&s);
        assert!(q.ambient().contains(&x));
        assert_relative_eq!((q.project(&x).coords() - s.coords()).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn section_property_on_uniform_points() {
        for n in [2usize, 3, 4, 5] {
            let q = QuotientSpace::new(n).unwrap();
            for s in q.invariant_sample(1000, 5 + n as u64).unwrap() {
                let x = q.lift(&s);
                assert!(q.ambient().contains(&x), "lift left SO({n})");
                let err = (q.project(&x).coords() - s.coords()).norm();
                assert!(err <= 1e-12, "section error {err} at n={n}");
            }
        }
    }

    #[test]
    fn invariant_sample_moments() {
        let q = QuotientSpace::new(4).unwrap();
        let est = mc::estimate_mean(6, 100_000, |rng| q.uniform_point(rng).last());
        assert!(est.value.abs() <= 3.0 * est.std_error);
        let est2 = mc::estimate_mean(8, 100_000, |rng| q.uniform_point(rng).last().powi(2));
        assert!((est2.value - 0.25).abs() <= 3.0 * est2.std_error);
        for s in q.invariant_sample(100, 9).unwrap() {
            assert_relative_eq!(s.coords().norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn projected_haar_matches_last_coordinate_density() {
        // histogram of s_n under project(haar): on S^2 the last coordinate
        // is uniform on [-1, 1]; 20 bins, 4 sigma
        let q = QuotientSpace::new(3).unwrap();
        let n = 100_000;
        let vals = mc::sample_stream(33, n, |rng| {
            q.project(&GroupPoint::Rotation(group::haar_rotation(3, rng))).last()
        });
        let bins = 20;
        let mut h = vec![0usize; bins];
        for v in vals {
            let k = (((v + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1);
            h[k] += 1;
        }
        let p = 1.0 / bins as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        for (k, &c) in h.iter().enumerate() {
            let freq = c as f64 / n as f64;
            assert!((freq - p).abs() <= 4.0 * sigma, "bin {k}: {freq} vs {p}");
        }
    }

    #[test]
    fn induced_identity_acts_trivially() {
        let q = QuotientSpace::new(3).unwrap();
        let act = q
            .induced_automorphism(&Automorphism::identity(q.ambient()), 64, 0)
            .unwrap();
        assert!(act.automorphism().preserves_k());
        for s in q.invariant_sample(20, 1).unwrap() {
            assert_relative_eq!((act.apply(&s).coords() - s.coords()).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn induced_conjugation_matches_explicit_product() {
        // conjugation by an embedded planar rotation in SO(4): the action
        // rotates the horizontal part by u^T and fixes s_4
        let q = QuotientSpace::new(4).unwrap();
        let u = planar_rotation(3, 0, 1, 0.9);
        let aut = Automorphism::conjugation(q.ambient(), q.embed_subgroup(&u)).unwrap();
        let act = q.induced_automorphism(&aut, 64, 3).unwrap();
        for s in q.invariant_sample(200, 11).unwrap() {
            let got = act.apply(&s);
            // oracle: project the explicit conjugated lift
            let lifted = q.lift(&s);
            let image = aut.apply(&lifted);
            let expected = q.project(&image);
            assert!((got.coords() - expected.coords()).norm() <= 1e-10);
            // and the closed form on the horizontal part
            let hor = u.transpose() * s.horizontal();
            for i in 0..3 {
                assert_relative_eq!(got.coords()[i], hor[i], epsilon = 1e-10);
            }
            assert_relative_eq!(got.last(), s.last(), epsilon = 1e-12);
        }
    }

    #[test]
    fn non_normalizing_conjugation_is_rejected() {
        let q = QuotientSpace::new(3).unwrap();
        let bad = Automorphism::conjugation(q.ambient(), planar_rotation(3, 0, 2, 0.4)).unwrap();
        let err = q.induced_automorphism(&bad, 64, 0).unwrap_err();
        assert!(matches!(err, Error::DoesNotNormalizeK { .. }), "{err}");
    }

    #[test]
    fn weil_constant_function_is_exact() {
        let q = QuotientSpace::new(3).unwrap();
        let rep = q.weil_check(|_| 1.0, 10_000, 0).unwrap();
        assert_eq!(rep.lhs.value, 1.0);
        assert_eq!(rep.rhs.value, 1.0);
        assert!(rep.pass);
        assert!(rep.right_k_invariant);
    }

    #[test]
    fn weil_sphere_moment() {
        // g(x) = ((x e_n)_n)^2 integrates to 1/n on both sides
        let q = QuotientSpace::new(3).unwrap();
        let n = q.ambient_dim();
        let rep = q
            .weil_check(|x: &DMatrix<f64>| x[(n - 1, n - 1)].powi(2), 100_000, 5)
            .unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!((rep.lhs.value - 1.0 / n as f64).abs() <= 4.0 * rep.lhs.std_error);
        // right-K-invariant: the inner integral collapses pointwise
        assert!(rep.right_k_invariant);
        assert!(rep.collapse_residual <= 1e-12);
        let qs = rep.quotient_side.unwrap();
        assert!((qs.value - rep.rhs.value).abs() <= 4.0 * qs.combined_sigma(&rep.rhs));
    }

    #[test]
    fn weil_non_invariant_integrand() {
        // g(x) = x_11^2 is not right-K-invariant but the formula still holds
        let q = QuotientSpace::new(3).unwrap();
        let rep = q.weil_check(|x: &DMatrix<f64>| x[(0, 0)].powi(2), 100_000, 6).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(!rep.right_k_invariant);
        assert!(rep.quotient_side.is_none());
    }
}
