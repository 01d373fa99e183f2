pub mod cutoff;
pub mod deviation;
pub mod fitter;
pub mod integrand;
pub mod spectral;
