//! Concrete group backends: Euclidean space R^n under addition and the
//! rotation groups SO(n), each with a left-invariant metric, Haar measure,
//! Lie-algebra calculus, ball volumes, doubling profiles, and automorphisms
//! with their differentials and moduli.
//!
//! Conventions: Haar measure on compact backends is normalized to total mass
//! one; the metric on SO(n) is the bi-invariant geodesic distance
//! rho(x, y) = ||log(x^T y)||_F induced by the Frobenius inner product on the
//! skew-symmetric matrices.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mc;
use crate::quad;

/// A concrete group: Euclidean R^n or the rotation group SO(n).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    Euclidean { dim: usize },
    SpecialOrthogonal { dim: usize },
}

impl Backend {
    pub fn euclidean(dim: usize) -> Backend {
        assert!(dim >= 1);
        Backend::Euclidean { dim }
    }

    pub fn special_orthogonal(dim: usize) -> Backend {
        assert!(dim >= 2, "SO(n) backend needs n >= 2");
        Backend::SpecialOrthogonal { dim }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Backend::Euclidean { dim } | Backend::SpecialOrthogonal { dim } => dim,
        }
    }

    pub fn is_compact(&self) -> bool {
        matches!(self, Backend::SpecialOrthogonal { .. })
    }

    /// Total Haar mass: exactly 1 for compact backends, infinite otherwise.
    pub fn total_mass(&self) -> f64 {
        if self.is_compact() {
            1.0
        } else {
            f64::INFINITY
        }
    }

    pub fn lie_algebra_dim(&self) -> usize {
        match *self {
            Backend::Euclidean { dim } => dim,
            Backend::SpecialOrthogonal { dim } => dim * (dim - 1) / 2,
        }
    }

    /// Metric diameter: sqrt(2 floor(n/2)) pi for SO(n), infinite for R^n.
    pub fn diameter(&self) -> f64 {
        match *self {
            Backend::Euclidean { .. } => f64::INFINITY,
            Backend::SpecialOrthogonal { dim } => {
                (2.0 * (dim / 2) as f64).sqrt() * std::f64::consts::PI
            }
        }
    }

    pub fn identity(&self) -> GroupPoint {
        match *self {
            Backend::Euclidean { dim } => GroupPoint::Vector(DVector::zeros(dim)),
            Backend::SpecialOrthogonal { dim } => GroupPoint::Rotation(DMatrix::identity(dim, dim)),
        }
    }

    /// Group operation: vector addition or matrix product.
    pub fn multiply(&self, x: &GroupPoint, y: &GroupPoint) -> GroupPoint {
        match (x, y) {
            (GroupPoint::Vector(a), GroupPoint::Vector(b)) => GroupPoint::Vector(a + b),
            (GroupPoint::Rotation(a), GroupPoint::Rotation(b)) => GroupPoint::Rotation(a * b),
            _ => panic!("mixed group points"),
        }
    }

    pub fn invert(&self, x: &GroupPoint) -> GroupPoint {
        match x {
            GroupPoint::Vector(a) => GroupPoint::Vector(-a),
            GroupPoint::Rotation(a) => GroupPoint::Rotation(a.transpose()),
        }
    }

    /// Membership check at the stated backend tolerances.
    pub fn contains(&self, x: &GroupPoint) -> bool {
        match (self, x) {
            (Backend::Euclidean { dim }, GroupPoint::Vector(v)) => {
                v.len() == *dim && v.iter().all(|c| c.is_finite())
            }
            (Backend::SpecialOrthogonal { dim }, GroupPoint::Rotation(m)) => {
                m.nrows() == *dim
                    && m.ncols() == *dim
                    && linalg::orthogonality_defect(m) <= 1e-10
                    && (m.determinant() - 1.0).abs() <= 1e-10
            }
            _ => false,
        }
    }
}

/// An element of a group backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GroupPoint {
    Vector(DVector<f64>),
    Rotation(DMatrix<f64>),
}

impl GroupPoint {
    pub fn as_vector(&self) -> Option<&DVector<f64>> {
        match self {
            GroupPoint::Vector(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_rotation(&self) -> Option<&DMatrix<f64>> {
        match self {
            GroupPoint::Rotation(m) => Some(m),
            _ => None,
        }
    }

    pub fn expect_vector(&self) -> &DVector<f64> {
        self.as_vector().expect("euclidean point")
    }

    pub fn expect_rotation(&self) -> &DMatrix<f64> {
        self.as_rotation().expect("rotation point")
    }
}

/// An element of the Lie algebra of a backend.
#[derive(Debug, Clone, PartialEq)]
pub enum LieAlgebraElement {
    Vector(DVector<f64>),
    Skew(DMatrix<f64>),
}

impl LieAlgebraElement {
    /// Frobenius / Euclidean norm in the fixed inner product.
    pub fn norm(&self) -> f64 {
        match self {
            LieAlgebraElement::Vector(v) => v.norm(),
            LieAlgebraElement::Skew(m) => m.norm(),
        }
    }
}

/// One Haar-uniform rotation matrix: QR of a Gaussian matrix with the
/// R-diagonal sign correction, determinant repaired by negating the last
/// column (a fixed right translation, which preserves Haar measure).
pub fn haar_rotation(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = nalgebra::linalg::QR::new(g);
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    if q.determinant() < 0.0 {
        for i in 0..n {
            q[(i, n - 1)] = -q[(i, n - 1)];
        }
    }
    q
}

/// I.i.d. samples under normalized Haar measure, deterministic given `seed`.
///
/// Only compact backends carry a normalizable Haar measure; the Euclidean
/// backend is refused (sample it through an explicit window instead).
pub fn haar_sample(backend: &Backend, count: usize, seed: u64) -> Result<Vec<GroupPoint>> {
    if count == 0 {
        return Err(Error::Domain("haar_sample needs count >= 1".into()));
    }
    match *backend {
        Backend::Euclidean { .. } => Err(Error::NonNormalizableHaar(
            "Haar measure on R^n has infinite mass; use a compact sampling window".into(),
        )),
        Backend::SpecialOrthogonal { dim } => Ok(mc::sample_stream(seed, count, |rng| {
            GroupPoint::Rotation(haar_rotation(dim, rng))
        })),
    }
}

/// Uniform point in an axis-aligned box (the Euclidean sampling window).
pub fn window_sample(window: &[(f64, f64)], rng: &mut ChaCha8Rng) -> GroupPoint {
    GroupPoint::Vector(DVector::from_iterator(
        window.len(),
        window.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)),
    ))
}

/// Left-invariant distance: ||x - y|| on R^n, ||log(x^T y)||_F on SO(n).
///
/// Rotation angles are taken in (-pi, pi], with the half-turn angle pi
/// allowed; this is the principal-branch convention used throughout.
pub fn distance(backend: &Backend, x: &GroupPoint, y: &GroupPoint) -> Result<f64> {
    match backend {
        Backend::Euclidean { .. } => Ok((x.expect_vector() - y.expect_vector()).norm()),
        Backend::SpecialOrthogonal { .. } => {
            let rel = x.expect_rotation().transpose() * y.expect_rotation();
            linalg::rotation_distance_from_identity(&rel)
        }
    }
}

/// Principal logarithm into the Lie algebra.
pub fn lie_log(backend: &Backend, x: &GroupPoint) -> Result<LieAlgebraElement> {
    match backend {
        Backend::Euclidean { .. } => Ok(LieAlgebraElement::Vector(x.expect_vector().clone())),
        Backend::SpecialOrthogonal { .. } => {
            Ok(LieAlgebraElement::Skew(linalg::so_log(x.expect_rotation())?))
        }
    }
}

/// Exponential back onto the group.
pub fn lie_exp(backend: &Backend, x: &LieAlgebraElement) -> GroupPoint {
    match (backend, x) {
        (Backend::Euclidean { .. }, LieAlgebraElement::Vector(v)) => GroupPoint::Vector(v.clone()),
        (Backend::SpecialOrthogonal { .. }, LieAlgebraElement::Skew(m)) => {
            GroupPoint::Rotation(linalg::so_exp(m))
        }
        _ => panic!("lie algebra element does not match backend"),
    }
}

type PointMap = Arc<dyn Fn(&GroupPoint) -> GroupPoint + Send + Sync>;

/// How an automorphism acts.
#[derive(Clone)]
pub enum AutomorphismKind {
    Identity,
    /// Invertible linear map on the Euclidean backend.
    Linear {
        matrix: DMatrix<f64>,
        inverse: DMatrix<f64>,
    },
    /// Conjugation x -> g^{-1} x g by a fixed orthogonal g on SO(n).
    Conjugation { by: DMatrix<f64> },
    /// User-supplied forward/inverse maps with a declared modulus; the
    /// differential falls back to finite differences.
    Custom {
        forward: PointMap,
        inverse: PointMap,
        modulus: f64,
    },
}

/// A topological group automorphism with its inverse, differential at the
/// identity, and Haar modulus.
#[derive(Clone)]
pub struct Automorphism {
    backend: Backend,
    kind: AutomorphismKind,
    preserves_k: bool,
}

impl fmt::Debug for Automorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            AutomorphismKind::Identity => "identity".to_string(),
            AutomorphismKind::Linear { matrix, .. } => format!("linear({matrix:.4})"),
            AutomorphismKind::Conjugation { by } => format!("conjugation({by:.4})"),
            AutomorphismKind::Custom { modulus, .. } => format!("custom(modulus={modulus})"),
        };
        f.debug_struct("Automorphism")
            .field("backend", &self.backend)
            .field("kind", &kind)
            .field("preserves_k", &self.preserves_k)
            .finish()
    }
}

impl Automorphism {
    pub fn identity(backend: Backend) -> Automorphism {
        Automorphism {
            backend,
            kind: AutomorphismKind::Identity,
            preserves_k: false,
        }
    }

    /// Linear automorphism x -> M x of the Euclidean backend.
    pub fn linear(backend: Backend, matrix: DMatrix<f64>) -> Result<Automorphism> {
        let n = match backend {
            Backend::Euclidean { dim } => dim,
            _ => {
                return Err(Error::InvalidAutomorphism(
                    "linear automorphisms act on the Euclidean backend".into(),
                ))
            }
        };
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::InvalidAutomorphism("matrix dimension mismatch".into()));
        }
        let inverse = matrix.clone().try_inverse().ok_or_else(|| {
            Error::InvalidAutomorphism("linear map is singular".into())
        })?;
        Ok(Automorphism {
            backend,
            kind: AutomorphismKind::Linear { matrix, inverse },
            preserves_k: false,
        })
    }

    /// Diagonal dilation x -> diag(u) x.
    pub fn dilation(entries: &[f64]) -> Result<Automorphism> {
        if entries.iter().any(|&u| u == 0.0) {
            return Err(Error::InvalidAutomorphism(
                "dilation entries must be nonzero".into(),
            ));
        }
        let n = entries.len();
        Automorphism::linear(
            Backend::euclidean(n),
            DMatrix::from_diagonal(&DVector::from_row_slice(entries)),
        )
    }

    /// Conjugation x -> g^{-1} x g on SO(n) by an orthogonal matrix g
    /// (determinant +1 or -1).
    pub fn conjugation(backend: Backend, by: DMatrix<f64>) -> Result<Automorphism> {
        let n = match backend {
            Backend::SpecialOrthogonal { dim } => dim,
            _ => {
                return Err(Error::InvalidAutomorphism(
                    "conjugations act on the SO(n) backend".into(),
                ))
            }
        };
        if by.nrows() != n || by.ncols() != n {
            return Err(Error::InvalidAutomorphism("matrix dimension mismatch".into()));
        }
        if linalg::orthogonality_defect(&by) > 1e-10 {
            return Err(Error::InvalidAutomorphism(
                "conjugating matrix is not orthogonal".into(),
            ));
        }
        Ok(Automorphism {
            backend,
            kind: AutomorphismKind::Conjugation { by },
            preserves_k: false,
        })
    }

    /// User-supplied automorphism; the differential will use the
    /// finite-difference fallback and the modulus is taken on trust.
    pub fn custom(backend: Backend, forward: PointMap, inverse: PointMap, modulus: f64) -> Result<Automorphism> {
        if !(modulus > 0.0) {
            return Err(Error::InvalidAutomorphism("modulus must be positive".into()));
        }
        Ok(Automorphism {
            backend,
            kind: AutomorphismKind::Custom {
                forward,
                inverse,
                modulus,
            },
            preserves_k: false,
        })
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn kind(&self) -> &AutomorphismKind {
        &self.kind
    }

    pub fn preserves_k(&self) -> bool {
        self.preserves_k
    }

    pub(crate) fn with_preserves_k(mut self) -> Automorphism {
        self.preserves_k = true;
        self
    }

    pub fn apply(&self, x: &GroupPoint) -> GroupPoint {
        match &self.kind {
            AutomorphismKind::Identity => x.clone(),
            AutomorphismKind::Linear { matrix, .. } => GroupPoint::Vector(matrix * x.expect_vector()),
            AutomorphismKind::Conjugation { by } => {
                GroupPoint::Rotation(by.transpose() * x.expect_rotation() * by)
            }
            AutomorphismKind::Custom { forward, .. } => forward(x),
        }
    }

    pub fn apply_inverse(&self, x: &GroupPoint) -> GroupPoint {
        match &self.kind {
            AutomorphismKind::Identity => x.clone(),
            AutomorphismKind::Linear { inverse, .. } => {
                GroupPoint::Vector(inverse * x.expect_vector())
            }
            AutomorphismKind::Conjugation { by } => {
                GroupPoint::Rotation(by * x.expect_rotation() * by.transpose())
            }
            AutomorphismKind::Custom { inverse, .. } => inverse(x),
        }
    }

    /// The inverse automorphism.
    pub fn inverse(&self) -> Automorphism {
        let kind = match &self.kind {
            AutomorphismKind::Identity => AutomorphismKind::Identity,
            AutomorphismKind::Linear { matrix, inverse } => AutomorphismKind::Linear {
                matrix: inverse.clone(),
                inverse: matrix.clone(),
            },
            AutomorphismKind::Conjugation { by } => AutomorphismKind::Conjugation {
                by: by.transpose(),
            },
            AutomorphismKind::Custom {
                forward,
                inverse,
                modulus,
            } => AutomorphismKind::Custom {
                forward: inverse.clone(),
                inverse: forward.clone(),
                modulus: 1.0 / modulus,
            },
        };
        Automorphism {
            backend: self.backend,
            kind,
            preserves_k: self.preserves_k,
        }
    }

    /// Haar modulus: |det| for linear maps on R^n, exactly 1 on SO(n)
    /// (compact groups admit only measure-preserving automorphisms).
    pub fn modulus(&self) -> f64 {
        match &self.kind {
            AutomorphismKind::Identity => 1.0,
            AutomorphismKind::Linear { matrix, .. } => matrix.determinant().abs(),
            AutomorphismKind::Conjugation { .. } => 1.0,
            AutomorphismKind::Custom { modulus, .. } => {
                if self.backend.is_compact() {
                    1.0
                } else {
                    *modulus
                }
            }
        }
    }
}

/// The differential of an automorphism at the identity, as a matrix in the
/// fixed orthonormal Lie-algebra basis.
#[derive(Debug, Clone)]
pub struct DifferentialMatrix {
    pub matrix: DMatrix<f64>,
    /// Set when the analytic form was unavailable and a finite-difference
    /// approximation (step 1e-6) was used instead.
    pub finite_difference: bool,
}

impl DifferentialMatrix {
    pub fn spectral_norm(&self) -> f64 {
        linalg::spectral_norm(&self.matrix)
    }

    pub fn hilbert_schmidt_norm(&self) -> f64 {
        self.matrix.norm()
    }
}

/// Matrix of X -> (d phi)_e X in the fixed Lie-algebra basis.
///
/// Analytic for the built-in families: a linear map on R^n is its own
/// differential; a conjugation x -> g^{-1} x g acts on skew matrices by
/// X -> g^{-1} X g. Custom automorphisms fall back to finite differences
/// with step 1e-6 and set the warning flag.
pub fn differential_matrix(aut: &Automorphism) -> DifferentialMatrix {
    let backend = aut.backend();
    let dim = backend.lie_algebra_dim();
    match aut.kind() {
        AutomorphismKind::Identity => DifferentialMatrix {
            matrix: DMatrix::identity(dim, dim),
            finite_difference: false,
        },
        AutomorphismKind::Linear { matrix, .. } => DifferentialMatrix {
            matrix: matrix.clone(),
            finite_difference: false,
        },
        AutomorphismKind::Conjugation { by } => {
            let n = backend.dim();
            let basis = linalg::skew_basis(n);
            let mut m = DMatrix::zeros(dim, dim);
            for (a, ea) in basis.iter().enumerate() {
                let image = by.transpose() * ea * by;
                for (b, eb) in basis.iter().enumerate() {
                    m[(b, a)] = linalg::frobenius_inner(eb, &image);
                }
            }
            DifferentialMatrix {
                matrix: m,
                finite_difference: false,
            }
        }
        AutomorphismKind::Custom { .. } => {
            let step = 1e-6;
            let mut m = DMatrix::zeros(dim, dim);
            match backend {
                Backend::Euclidean { dim: n } => {
                    let origin = backend.identity();
                    let f0 = aut.apply(&origin);
                    for a in 0..*n {
                        let mut v = DVector::zeros(*n);
                        v[a] = step;
                        let fa = aut.apply(&GroupPoint::Vector(v));
                        let col = (fa.expect_vector() - f0.expect_vector()) / step;
                        m.set_column(a, &col);
                    }
                }
                Backend::SpecialOrthogonal { dim: n } => {
                    let basis = linalg::skew_basis(*n);
                    for (a, ea) in basis.iter().enumerate() {
                        let moved = aut.apply(&GroupPoint::Rotation(linalg::so_exp(&(ea * step))));
                        let log = linalg::so_log(moved.expect_rotation())
                            .expect("finite-difference step stays near the identity");
                        m.set_column(a, &(linalg::skew_coords(&log) / step));
                    }
                }
            }
            DifferentialMatrix {
                matrix: m,
                finite_difference: true,
            }
        }
    }
}

/// Ball volume with a confidence half-width.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub value: f64,
    /// One standard error (0 for closed forms).
    pub std_error: f64,
    pub samples: usize,
    /// Set when no sample landed in the ball: the estimate is a resolution
    /// floor, not a measured zero.
    pub insufficient_resolution: bool,
}

/// Haar volume of the ball of radius `r`; the center is irrelevant by left
/// invariance. Closed form on R^n, Monte-Carlo fraction on SO(n).
pub fn ball_volume(backend: &Backend, r: f64, mc_samples: usize, seed: u64) -> Result<VolumeEstimate> {
    if !(r > 0.0) {
        return Err(Error::Domain("ball radius must be positive".into()));
    }
    match *backend {
        Backend::Euclidean { dim } => Ok(VolumeEstimate {
            value: quad::ball_volume_euclidean(dim, r),
            std_error: 0.0,
            samples: 0,
            insufficient_resolution: false,
        }),
        Backend::SpecialOrthogonal { dim } => {
            if r >= backend.diameter() {
                return Ok(VolumeEstimate {
                    value: 1.0,
                    std_error: 0.0,
                    samples: 0,
                    insufficient_resolution: false,
                });
            }
            let est = mc::estimate_mean(seed, mc_samples, |rng| {
                let x = haar_rotation(dim, rng);
                match linalg::rotation_distance_from_identity(&x) {
                    Ok(d) if d <= r => 1.0,
                    _ => 0.0,
                }
            });
            Ok(VolumeEstimate {
                value: est.value,
                std_error: est.std_error,
                samples: est.samples,
                insufficient_resolution: est.value == 0.0,
            })
        }
    }
}

/// A single ratio volume(2r)/volume(r) with its standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DoublingRatio {
    pub radius: f64,
    pub ratio: f64,
    pub std_error: f64,
    /// Upper confidence quotient used in the doubling-constant maximum.
    pub upper: f64,
}

/// Doubling profile over a radii grid: volume estimates, the doubling
/// constant (largest upper-confidence volume quotient) and its exponent
/// d = log2(C).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoublingProfile {
    pub radii: Vec<f64>,
    pub volumes: Vec<VolumeEstimate>,
    pub doubled_volumes: Vec<VolumeEstimate>,
    pub ratios: Vec<DoublingRatio>,
    /// Grid indices excluded from the maximum because the small-ball volume
    /// CI overlapped zero.
    pub excluded: Vec<usize>,
    pub doubling_constant: f64,
    pub exponent: f64,
    pub exact: bool,
}

/// Confidence multiplier for the upper quotient in doubling profiles.
const DOUBLING_CI_Z: f64 = 2.0;

/// Estimate the doubling profile over a sorted positive radii grid.
///
/// On R^n the ratios are the closed form 2^n, so the constant and exponent
/// are exact. On SO(n) every volume is Monte-Carlo with `mc_samples` draws.
pub fn doubling_profile(
    backend: &Backend,
    radii: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<DoublingProfile> {
    if radii.is_empty() {
        return Err(Error::Domain("doubling profile needs a nonempty radii grid".into()));
    }
    if radii.iter().any(|&r| !(r > 0.0)) || radii.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Domain("radii must be positive and sorted".into()));
    }
    let mut volumes = Vec::new();
    let mut doubled = Vec::new();
    let mut ratios = Vec::new();
    let mut excluded = Vec::new();
    match *backend {
        Backend::Euclidean { dim } => {
            for (i, &r) in radii.iter().enumerate() {
                let v1 = ball_volume(backend, r, 0, seed)?;
                let v2 = ball_volume(backend, 2.0 * r, 0, seed)?;
                ratios.push(DoublingRatio {
                    radius: r,
                    ratio: v2.value / v1.value,
                    std_error: 0.0,
                    upper: v2.value / v1.value,
                });
                volumes.push(v1);
                doubled.push(v2);
                let _ = i;
            }
            let c = 2f64.powi(dim as i32);
            Ok(DoublingProfile {
                radii: radii.to_vec(),
                volumes,
                doubled_volumes: doubled,
                ratios,
                excluded,
                doubling_constant: c,
                exponent: c.log2(),
                exact: true,
            })
        }
        Backend::SpecialOrthogonal { .. } => {
            let mut c: f64 = 1.0;
            for (i, &r) in radii.iter().enumerate() {
                let v1 = ball_volume(backend, r, mc_samples, mc::derive_seed(seed, 2 * i as u64))?;
                let v2 = ball_volume(
                    backend,
                    2.0 * r,
                    mc_samples,
                    mc::derive_seed(seed, 2 * i as u64 + 1),
                )?;
                let lower1 = v1.value - DOUBLING_CI_Z * v1.std_error;
                if v1.insufficient_resolution || lower1 <= 0.0 {
                    excluded.push(i);
                    volumes.push(v1);
                    doubled.push(v2);
                    continue;
                }
                let ratio = v2.value / v1.value;
                let rel = ((v1.std_error / v1.value).powi(2) + (v2.std_error / v2.value).powi(2))
                    .sqrt();
                let upper = (v2.value + DOUBLING_CI_Z * v2.std_error) / lower1;
                ratios.push(DoublingRatio {
                    radius: r,
                    ratio,
                    std_error: ratio * rel,
                    upper,
                });
                c = c.max(upper);
                volumes.push(v1);
                doubled.push(v2);
            }
            Ok(DoublingProfile {
                radii: radii.to_vec(),
                volumes,
                doubled_volumes: doubled,
                ratios,
                excluded,
                doubling_constant: c,
                exponent: c.log2(),
                exact: false,
            })
        }
    }
}

/// Outcome of a sampled Lipschitz test for one automorphism.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub pairs: usize,
    pub violations: usize,
    /// The constant tested: spectral norm of the differential at identity.
    pub constant: f64,
    /// Largest observed distance ratio.
    pub max_ratio: f64,
    pub finite_difference: bool,
}

/// Count sampled pairs violating rho(phi p, phi q) <= c rho(p, q) (1 + tol),
/// where c is the spectral norm of the differential at the identity.
///
/// Pairs come from Haar measure on compact backends; the Euclidean backend
/// requires an explicit box `window`.
pub fn lipschitz_check(
    aut: &Automorphism,
    n_pairs: usize,
    seed: u64,
    tolerance: f64,
    window: Option<&[(f64, f64)]>,
) -> Result<LipschitzReport> {
    let backend = *aut.backend();
    let diff = differential_matrix(aut);
    let constant = diff.spectral_norm();
    let draw = |rng: &mut ChaCha8Rng| -> (GroupPoint, GroupPoint) {
        match backend {
            Backend::SpecialOrthogonal { dim } => (
                GroupPoint::Rotation(haar_rotation(dim, rng)),
                GroupPoint::Rotation(haar_rotation(dim, rng)),
            ),
            Backend::Euclidean { .. } => {
                let w = window.expect("validated above");
                (window_sample(w, rng), window_sample(w, rng))
            }
        }
    };
    if !backend.is_compact() {
        match window {
            None => {
                return Err(Error::Domain(
                    "euclidean Lipschitz check needs a sampling window".into(),
                ))
            }
            Some(w) if w.len() != backend.dim() => {
                return Err(Error::Domain("window dimension mismatch".into()))
            }
            _ => {}
        }
    }
    let results = mc::sample_stream(seed, n_pairs, |rng| {
        let (p, q) = draw(rng);
        let base = distance(&backend, &p, &q).expect("sampled points are valid");
        if base == 0.0 {
            return 0.0;
        }
        let mapped = distance(&backend, &aut.apply(&p), &aut.apply(&q))
            .expect("automorphism images are valid");
        mapped / base
    });
    let mut violations = 0;
    let mut max_ratio: f64 = 0.0;
    for ratio in results {
        max_ratio = max_ratio.max(ratio);
        if ratio > constant * (1.0 + tolerance) {
            violations += 1;
        }
    }
    Ok(LipschitzReport {
        pairs: n_pairs,
        violations,
        constant,
        max_ratio,
        finite_difference: diff.finite_difference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn so(n: usize) -> Backend {
        Backend::special_orthogonal(n)
    }

    #[test]
    fn haar_samples_are_rotations() {
        let pts = haar_sample(&so(3), 1000, 7).unwrap();
        for p in &pts {
            assert!(so(3).contains(p));
        }
    }

    #[test]
    fn haar_last_coordinate_is_centered() {
        // mean of (X e3)_3 over Haar samples is 0 (uniform sphere coordinate)
        let est = mc::estimate_mean(7, 100_000, |rng| {
            let x = haar_rotation(3, rng);
            x[(2, 2)]
        });
        assert!(est.value.abs() <= 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn euclidean_haar_is_refused() {
        let err = haar_sample(&Backend::euclidean(2), 10, 0).unwrap_err();
        assert!(matches!(err, Error::NonNormalizableHaar(_)));
    }

    #[test]
    fn distance_zero_and_planar_closed_form() {
        let b = so(2);
        let id = b.identity();
        assert_eq!(distance(&b, &id, &id).unwrap(), 0.0);
        for &theta in &[0.3, 1.0, PI] {
            let r = GroupPoint::Rotation(DMatrix::from_row_slice(
                2,
                2,
                &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
            ));
            assert_relative_eq!(
                distance(&b, &id, &r).unwrap(),
                2.0f64.sqrt() * theta,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn distance_is_left_invariant() {
        for n in [2usize, 3, 4] {
            let b = so(n);
            let pts = haar_sample(&b, 300, 13 + n as u64).unwrap();
            for tri in pts.chunks(3) {
                if tri.len() < 3 {
                    continue;
                }
                let (z, x, y) = (&tri[0], &tri[1], &tri[2]);
                let d1 = distance(&b, x, y).unwrap();
                let d2 = distance(&b, &b.multiply(z, x), &b.multiply(z, y)).unwrap();
                assert!((d1 - d2).abs() <= 1e-9, "n={n}: {d1} vs {d2}");
            }
        }
    }

    #[test]
    fn lie_log_of_identity_is_zero() {
        let b = so(4);
        match lie_log(&b, &b.identity()).unwrap() {
            LieAlgebraElement::Skew(m) => assert_eq!(m.norm(), 0.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn lie_exp_matches_rodrigues_quarter_turn() {
        // exponential of the (1,2)-plane generator scaled to a quarter turn
        let b = so(3);
        let mut gen = DMatrix::zeros(3, 3);
        gen[(0, 1)] = -1.0;
        gen[(1, 0)] = 1.0;
        let x = lie_exp(&b, &LieAlgebraElement::Skew(gen * (PI / 2.0)));
        // Rodrigues for axis e3, angle pi/2
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!((x.expect_rotation() - expected).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn log_exp_roundtrip_on_haar_samples() {
        for n in [3usize, 4] {
            let b = so(n);
            let pts = haar_sample(&b, 100, 17).unwrap();
            for p in &pts {
                let back = lie_exp(&b, &lie_log(&b, p).unwrap());
                let err = (back.expect_rotation() - p.expect_rotation()).norm();
                assert!(err <= 1e-10, "n={n} roundtrip error {err}");
            }
        }
    }

    #[test]
    fn differential_of_identity_and_dilation() {
        let id = Automorphism::identity(so(3));
        let d = differential_matrix(&id);
        assert!(!d.finite_difference);
        assert_relative_eq!((d.matrix - DMatrix::identity(3, 3)).norm(), 0.0);

        let dil = Automorphism::dilation(&[2.0, 3.0]).unwrap();
        let d = differential_matrix(&dil);
        assert_relative_eq!(d.matrix[(0, 0)], 2.0);
        assert_relative_eq!(d.matrix[(1, 1)], 3.0);
        assert_relative_eq!(d.spectral_norm(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn conjugation_differential_is_orthogonal() {
        // embedded O(2) element inside SO(3)
        let mut u = DMatrix::identity(3, 3);
        let a = 0.8f64;
        u[(0, 0)] = a.cos();
        u[(0, 1)] = -a.sin();
        u[(1, 0)] = a.sin();
        u[(1, 1)] = a.cos();
        let aut = Automorphism::conjugation(so(3), u).unwrap();
        let d = differential_matrix(&aut);
        assert!((d.spectral_norm() - 1.0).abs() <= 1e-10);
        assert!(linalg::orthogonality_defect(&d.matrix) <= 1e-10);
        assert_eq!(aut.modulus(), 1.0);
    }

    #[test]
    fn finite_difference_fallback_matches_linear() {
        let b = Backend::euclidean(2);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.5]);
        let mi = m.clone().try_inverse().unwrap();
        let mf = m.clone();
        let aut = Automorphism::custom(
            b,
            Arc::new(move |x: &GroupPoint| GroupPoint::Vector(&mf * x.expect_vector())),
            Arc::new(move |x: &GroupPoint| GroupPoint::Vector(&mi * x.expect_vector())),
            m.determinant().abs(),
        )
        .unwrap();
        let d = differential_matrix(&aut);
        assert!(d.finite_difference);
        assert_relative_eq!((d.matrix - &m).norm(), 0.0, epsilon = 1e-6);
    }

    #[test]
    fn ball_volume_closed_forms() {
        let v = ball_volume(&Backend::euclidean(2), 1.0, 0, 0).unwrap();
        assert_relative_eq!(v.value, PI, epsilon = 1e-12);
        let full = ball_volume(&so(3), so(3).diameter(), 1000, 0).unwrap();
        assert_eq!(full.value, 1.0);
    }

    #[test]
    fn ball_volume_monotone_on_so3() {
        let radii = [0.5, 1.0, 1.5, 2.0, 3.0, 4.0];
        let mut prev = 0.0;
        for (i, &r) in radii.iter().enumerate() {
            let v = ball_volume(&so(3), r, 40_000, 100 + i as u64).unwrap();
            assert!(
                v.value + 4.0 * v.std_error >= prev,
                "volume decreased at r={r}"
            );
            prev = v.value - 4.0 * v.std_error;
        }
    }

    #[test]
    fn small_ball_flags_insufficient_resolution() {
        let v = ball_volume(&so(3), 1e-4, 2000, 5).unwrap();
        assert!(v.insufficient_resolution);
    }

    #[test]
    fn euclidean_doubling_is_exact() {
        for n in 1..=3usize {
            let profile =
                doubling_profile(&Backend::euclidean(n), &[0.5, 1.0, 2.0], 0, 0).unwrap();
            assert_eq!(profile.doubling_constant, 2f64.powi(n as i32));
            assert_eq!(profile.exponent, n as f64);
            assert!(profile.exact);
            for r in &profile.ratios {
                assert_relative_eq!(r.ratio, 2f64.powi(n as i32), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn so3_doubling_ratios_are_at_least_one() {
        let radii: Vec<f64> = (1..=6).map(|i| i as f64 * PI * 2f64.sqrt() / 6.0).collect();
        let profile = doubling_profile(&so(3), &radii, 50_000, 21).unwrap();
        assert!(profile.doubling_constant >= 1.0);
        assert!(profile.exponent.is_finite());
        for r in &profile.ratios {
            assert!(
                r.ratio + 4.0 * r.std_error >= 1.0,
                "ratio below 1 at r={}",
                r.radius
            );
        }
    }

    #[test]
    fn lipschitz_identity_and_conjugation_have_no_violations() {
        let id = Automorphism::identity(so(3));
        let rep = lipschitz_check(&id, 2000, 3, 1e-8, None).unwrap();
        assert_eq!(rep.violations, 0);

        let mut u = DMatrix::identity(4, 4);
        u[(0, 0)] = -1.0; // reflection in O(3) embedded in SO(4) conjugation
        let aut = Automorphism::conjugation(so(4), u).unwrap();
        let rep = lipschitz_check(&aut, 10_000, 4, 1e-8, None).unwrap();
        assert_eq!(rep.violations, 0, "max ratio {}", rep.max_ratio);
        assert_relative_eq!(rep.constant, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn lipschitz_dilation_constant_is_spectral_norm() {
        let aut = Automorphism::dilation(&[2.0, 3.0]).unwrap();
        let rep =
            lipschitz_check(&aut, 5000, 9, 1e-12, Some(&[(-1.0, 1.0), (-1.0, 1.0)])).unwrap();
        assert_eq!(rep.violations, 0);
        assert_relative_eq!(rep.constant, 3.0, epsilon = 1e-12);
        // the constant is attained along e2
        assert!(rep.max_ratio > 2.5);
    }

    #[test]
    fn euclidean_lipschitz_needs_window() {
        let aut = Automorphism::dilation(&[2.0]).unwrap();
        assert!(lipschitz_check(&aut, 10, 0, 1e-8, None).is_err());
    }

    #[test]
    fn composition_drift_is_controlled() {
        let b = so(4);
        let pts = haar_sample(&b, 100, 31).unwrap();
        let mut acc = b.identity();
        for p in &pts {
            acc = b.multiply(&acc, p);
        }
        let m = linalg::reorthogonalize(acc.expect_rotation());
        assert!(linalg::orthogonality_defect(&m) <= 1e-9);
    }

    #[test]
    fn haar_invariance_histogram() {
        // distance-to-identity histograms of X and zX agree (4 sigma, 20 bins)
        let b = so(3);
        let z = haar_sample(&b, 1, 999).unwrap().remove(0);
        let n = 100_000;
        let d1 = mc::sample_stream(40, n, |rng| {
            linalg::rotation_distance_from_identity(&haar_rotation(3, rng)).unwrap()
        });
        let d2 = mc::sample_stream(41, n, |rng| {
            let x = GroupPoint::Rotation(haar_rotation(3, rng));
            distance(&b, &b.identity(), &b.multiply(&z, &x)).unwrap()
        });
        let diam = b.diameter();
        let bins = 20;
        let hist = |data: &[f64]| {
            let mut h = vec![0usize; bins];
            for &v in data {
                let k = ((v / diam * bins as f64) as usize).min(bins - 1);
                h[k] += 1;
            }
            h
        };
        let h1 = hist(&d1);
        let h2 = hist(&d2);
        for k in 0..bins {
            let p1 = h1[k] as f64 / n as f64;
            let p2 = h2[k] as f64 / n as f64;
            let p = 0.5 * (p1 + p2);
            let sigma = (p * (1.0 - p) * 2.0 / n as f64).sqrt();
            assert!(
                (p1 - p2).abs() <= 4.0 * sigma + 1e-12,
                "bin {k}: {p1} vs {p2}"
            );
        }
    }
}
