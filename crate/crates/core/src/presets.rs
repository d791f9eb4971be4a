//! Reference parameter sets for sheep brain tissue (B1–B3) and the
//! brain–skull interface (S1–S3) under quasi-static shear.

use crate::cohesive::CohesiveLaw;
use crate::material::{MaterialRecord, OgdenParams, BRAIN_POISSON_RATIO, DEFAULT_DENSITY};

/// Exponents shared by all tissue sets.
pub const TISSUE_ALPHA: [f64; 2] = [-8.0, 16.0];

/// `(name, μ₁, μ₂)` in Pa.
pub const TISSUE_SETS: [(&str, f64, f64); 3] = [("B1", 800.0, 386.7), ("B2", 1210.8, 466.4), ("B3", 821.6, 599.9)];

/// `(name, tn0 Pa, ts0 = tt0 Pa, G N/m)`.
pub const INTERFACE_SETS: [(&str, f64, f64, f64); 3] =
    [("S1", 3.0e3, 2.1e3, 0.48), ("S2", 3.4e3, 1.9e3, 0.54), ("S3", 2.8e3, 1.8e3, 0.7)];

pub fn tissue(name: &str) -> Option<OgdenParams> {
    TISSUE_SETS.iter().find(|(n, ..)| n.eq_ignore_ascii_case(name)).map(|&(_, mu1, mu2)| {
        OgdenParams::with_poisson([mu1, mu2], TISSUE_ALPHA, BRAIN_POISSON_RATIO).expect("reference tissue set is valid")
    })
}

pub fn tissue_record(name: &str, material_name: &str) -> Option<MaterialRecord> {
    TISSUE_SETS.iter().find(|(n, ..)| n.eq_ignore_ascii_case(name)).map(|&(_, mu1, mu2)| {
        MaterialRecord::ogden(material_name, [mu1, mu2], TISSUE_ALPHA, BRAIN_POISSON_RATIO, DEFAULT_DENSITY)
    })
}

pub fn interface(name: &str) -> Option<CohesiveLaw> {
    INTERFACE_SETS
        .iter()
        .find(|(n, ..)| n.eq_ignore_ascii_case(name))
        .map(|&(_, tn0, ts0, g)| CohesiveLaw::interface(tn0, ts0, g))
}

pub fn b1() -> OgdenParams {
    tissue("B1").unwrap()
}

pub fn s1() -> CohesiveLaw {
    interface("S1").unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookups() {
        assert_eq!(tissue("b2").unwrap().mu, [1210.8, 466.4]);
        assert_eq!(interface("S3").unwrap().g, 0.7);
        assert!(tissue("B4").is_none());
        assert_eq!(s1().tt0, s1().ts0);
    }
}
