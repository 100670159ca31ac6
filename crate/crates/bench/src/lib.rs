//! Inputs shared by the benchmarks.

use cyclofield_core::spectral::from_name;
use cyclofield_core::CyclicalSpectralDensity;

/// One singular frequency at `a = 1` with `alpha = 1/2`, `h = 1` on `[0, 2]`.
pub fn singular_density(n: usize) -> CyclicalSpectralDensity {
    from_name(&format!("gen({n},0.5,[(1,0.5)],constant(1,2))")).expect("valid density")
}
