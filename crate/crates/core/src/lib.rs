//! Multitype branching processes driven by an absorbed Markov chain on the
//! positive integers, with a proliferation term that injects new particles
//! at type 1.
//!
//! The crate covers the mean-semigroup criticality parameter `κ₀`, Perron
//! triples of truncated mean matrices, Lyapunov/Doeblin/birth-death
//! certificates for the underlying chain, and an exact stochastic simulator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod branching;
pub mod certificates;
pub mod chain;
pub mod cli;
pub mod config;
pub mod error;
pub mod linalg;
pub mod simulator;
pub mod spectral;

pub use branching::{Beta, BranchingModel, Criticality};
pub use chain::{AbsorbedRates, DistributionOverTypes, TailPolicy};
pub use error::{Error, Result};
pub use spectral::SpectralTriple;

/// Formats `x` with 12 significant digits, decimal where readable.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "NaN".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..=15).contains(&exp) {
        let s = format!("{:.11e}", x);
        let (mant, e) = s.split_once('e').unwrap();
        return format!("{}e{}", trim_zeros(mant), e);
    }
    let decimals = (11 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, x))
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        if t == "-0" {
            "0".into()
        } else {
            t.into()
        }
    } else {
        s.into()
    }
}

#[cfg(test)]
mod tests {
    use super::fmt_sig;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.1), "0.1");
        assert_eq!(fmt_sig(std::f64::consts::PI), "3.14159265359");
        assert_eq!(fmt_sig(-1234.5), "-1234.5");
        assert_eq!(fmt_sig(1e-9), "1e-9");
        assert_eq!(fmt_sig(2.5e20), "2.5e20");
        assert_eq!(fmt_sig(0.0), "0");
    }
}
