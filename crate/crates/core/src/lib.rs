//! Finsler geodesics as critical points of a discretized energy functional.
//!
//! Curves live in ambient coordinates on a small family of manifolds
//! (Euclidean space, flat tori, round spheres). The energy of a curve under a
//! Finsler metric, or under a convex regularization of it that is smooth on
//! the zero section, is minimized or made stationary by Sobolev-gradient
//! descent and Newton refinement. The Hessian at a critical curve then gives
//! Morse index and nullity, a numerical Lyapunov-Schmidt reduction on the
//! kernel, and index scans over iterates.
//!
//! The crate is `no_std` with `alloc` when built without the `std` feature.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

mod prelude {
    #![allow(unused_imports)]
    pub use alloc::boxed::Box;
    pub use alloc::format;
    pub use alloc::string::{String, ToString};
    pub use alloc::vec;
    pub use alloc::vec::Vec;
    pub use num_traits::Float;
}

pub mod action;
pub mod critpoint;
pub mod error;
pub mod finsler;
pub mod linalg;
pub mod loopspace;
pub mod manifold;
pub mod morse;
pub mod quad;
pub mod regularize;
pub mod sampling;

pub use error::{Error, Result};
