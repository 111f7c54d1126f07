//! Numerical Hausdorff operators on homogeneous spaces of Lie groups.
//!
//! The library provides two concrete group backends (Euclidean space and the
//! rotation groups SO(n)) with Haar sampling, invariant metrics, and doubling
//! profiles; the quotient sphere S^{n-1} = SO(n)/SO(n-1) with its invariant
//! measure; an atom calculus for Hardy spaces over doubling metric measure
//! spaces; discrete and continuous Hausdorff operators (including the
//! generalized Delsarte shift and the horizontal slice transform on the
//! sphere); and the machinery for the atomic-norm operator bound:
//! the kernel functional, automorphism moduli, and Lipschitz factors.
//!
//! Everything is deterministic: all Monte-Carlo estimates are driven by a
//! seedable counter-based RNG and block-wise reduction, see [`mc`].

pub mod atoms;
pub mod bounds;
pub mod error;
pub mod group;
pub mod homspace;
pub mod linalg;
pub mod mc;
pub mod operators;
pub mod quad;
pub mod space;

pub use error::{Error, Result};
