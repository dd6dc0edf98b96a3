//! Numerical building blocks shared by the rest of the crate.

pub mod fft;
pub mod quadrature;
pub mod roots;
pub mod special;

pub use fft::{fft_forward, fft_inverse, fft_shift, ifft_shift, ComplexVector, FftPlan};
pub use quadrature::{integrate_adaptive, integrate_with_budget, QuadratureResult};
pub use roots::{find_root_bisect, minimize_golden};
pub use special::{lambert_w0, std_normal_cdf, std_normal_pdf, std_normal_sf, upper_incomplete_gamma};
