//! Traction–separation law for the brain–skull interface.
//!
//! Before initiation the interface is linear and uncoupled:
//! `t = diag(Enn, Ess, Ett) · δ / T0`. Damage initiates when the maximum
//! nominal stress ratio `max(⟨tn⟩/tn0, |ts|/ts0, |tt|/tt0)` reaches one, and
//! then evolves with linear softening in the effective separation
//! `δm = sqrt(⟨δn⟩² + δs² + δt²)` so that the energy dissipated to complete
//! failure equals the fracture energy `G`. Compressive normal traction is
//! never degraded.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Interface normal modulus used for the brain–skull interface, Pa.
pub const INTERFACE_ENN: f64 = 61e3;
/// Interface tangential modulus used for the brain–skull interface, Pa.
pub const INTERFACE_ESS: f64 = 11e3;
/// Default constitutive thickness, m.
pub const DEFAULT_T0: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CohesiveError {
    #[error("invalid cohesive law: {0}")]
    InvalidLaw(String),
    #[error(
        "fracture energy {g} N/m is too small for the elastic branch: \
         failure separation must exceed initiation separation, minimum admissible G is {min_g} N/m"
    )]
    LawInfeasible { g: f64, min_g: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohesiveLaw {
    #[serde(rename = "Enn_Pa")]
    pub enn: f64,
    #[serde(rename = "Ess_Pa")]
    pub ess: f64,
    #[serde(rename = "Ett_Pa")]
    pub ett: f64,
    #[serde(rename = "tn0_Pa")]
    pub tn0: f64,
    #[serde(rename = "ts0_Pa")]
    pub ts0: f64,
    #[serde(rename = "tt0_Pa")]
    pub tt0: f64,
    /// Fracture energy, N/m.
    #[serde(rename = "G_N_per_m")]
    pub g: f64,
    /// Constitutive thickness used for nominal strains, m.
    #[serde(rename = "T0_m", default = "default_t0")]
    pub t0: f64,
}

fn default_t0() -> f64 {
    DEFAULT_T0
}

/// Named law as stored in mesh and configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawRecord {
    pub name: String,
    #[serde(flatten)]
    pub law: CohesiveLaw,
}

impl CohesiveLaw {
    /// Brain–skull interface law with the fixed elastic moduli, tangential
    /// isotropy (`tt0 = ts0`) and the default thickness.
    pub fn interface(tn0: f64, ts0: f64, g: f64) -> Self {
        Self {
            enn: INTERFACE_ENN,
            ess: INTERFACE_ESS,
            ett: INTERFACE_ESS,
            tn0,
            ts0,
            tt0: ts0,
            g,
            t0: DEFAULT_T0,
        }
    }

    pub fn validate(&self) -> Result<(), CohesiveError> {
        let fields = [
            ("Enn", self.enn),
            ("Ess", self.ess),
            ("Ett", self.ett),
            ("tn0", self.tn0),
            ("ts0", self.ts0),
            ("tt0", self.tt0),
            ("G", self.g),
            ("T0", self.t0),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CohesiveError::InvalidLaw(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    pub fn is_tangentially_isotropic(&self) -> bool {
        self.ts0 == self.tt0 && self.ess == self.ett
    }

    pub fn max_modulus(&self) -> f64 {
        self.enn.max(self.ess).max(self.ett)
    }
}

/// A (normal, first shear, second shear) triple. Used for separations (m),
/// nominal strains and tractions (Pa).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Modes {
    pub n: f64,
    pub s: f64,
    pub t: f64,
}

impl Modes {
    pub const ZERO: Modes = Modes { n: 0.0, s: 0.0, t: 0.0 };

    pub fn new(n: f64, s: f64, t: f64) -> Self {
        Self { n, s, t }
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(k * self.n, k * self.s, k * self.t)
    }

    pub fn dot(self, o: Modes) -> f64 {
        self.n * o.n + self.s * o.s + self.t * o.t
    }
}

/// Per-integration-point damage history.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CohesiveState {
    pub damage: f64,
    /// Largest effective separation seen, m.
    pub delta_max: f64,
    /// Effective separation at initiation, m.
    pub delta_init: f64,
    /// Effective separation at complete failure under the latest mode mix, m.
    pub delta_fail: f64,
    pub initiated: bool,
    /// Dissipated energy per unit area, J/m².
    pub dissipated: f64,
}

pub fn nominal_strains(separation: Modes, t0: f64) -> Modes {
    separation.scale(1.0 / t0)
}

pub fn elastic_traction(strains: Modes, law: &CohesiveLaw) -> Modes {
    Modes::new(law.enn * strains.n, law.ess * strains.s, law.ett * strains.t)
}

/// Maximum nominal stress ratio; initiation when `>= 1`.
pub fn initiation_index(traction: Modes, law: &CohesiveLaw) -> f64 {
    (traction.n.max(0.0) / law.tn0)
        .max(traction.s.abs() / law.ts0)
        .max(traction.t.abs() / law.tt0)
}

/// Effective separation with the normal part restricted to opening.
pub fn effective_separation(separation: Modes) -> f64 {
    let n = separation.n.max(0.0);
    (n * n + separation.s * separation.s + separation.t * separation.t).sqrt()
}

/// Undamaged elastic energy per unit area stored by the opening and shear
/// parts of the separation (the damage driving force), J/m².
fn driving_energy(separation: Modes, law: &CohesiveLaw) -> f64 {
    let e = nominal_strains(separation, law.t0);
    let en = e.n.max(0.0);
    0.5 * law.t0 * (law.enn * en * en + law.ess * e.s * e.s + law.ett * e.t * e.t)
}

/// Energy per unit area that would be released on unloading, J/m².
pub fn recoverable_energy(state: &CohesiveState, separation: Modes, law: &CohesiveLaw) -> f64 {
    let compressive = separation.n.min(0.0) / law.t0;
    (1.0 - state.damage) * driving_energy(separation, law) + 0.5 * law.t0 * law.enn * compressive * compressive
}

/// Advances the damage history to `separation` and returns the transmitted
/// traction with the new state.
pub fn update(
    state: &CohesiveState,
    separation: Modes,
    law: &CohesiveLaw,
) -> Result<(Modes, CohesiveState), CohesiveError> {
    let elastic = elastic_traction(nominal_strains(separation, law.t0), law);
    let delta_m = effective_separation(separation);
    let mut next = *state;

    if !next.initiated {
        if initiation_index(elastic, law) < 1.0 {
            return Ok((elastic, next));
        }
        // work-conjugate effective traction: t·δ / δm over the opening and shear parts
        let t_eff = (elastic.n.max(0.0) * separation.n.max(0.0) + elastic.s * separation.s + elastic.t * separation.t)
            / delta_m;
        let delta_fail = 2.0 * law.g / t_eff;
        if delta_fail <= delta_m {
            return Err(CohesiveError::LawInfeasible {
                g: law.g,
                min_g: t_eff * delta_m / 2.0,
            });
        }
        next.initiated = true;
        next.delta_init = delta_m;
        next.delta_fail = delta_fail;
        next.delta_max = delta_m;
    }

    if delta_m > next.delta_max {
        let from = next.delta_max;
        let k = 2.0 * driving_energy(separation, law) / (delta_m * delta_m);
        // linear softening through the current state under the current mode
        // mix, sized to release exactly the fracture energy still left; on a
        // proportional path this is the fixed triangle from initiation
        let t1 = (1.0 - next.damage) * k * from;
        let remaining = (law.g - next.dissipated).max(0.0);
        let df = if t1 > 0.0 { 2.0 * remaining / t1 } else { from };
        if df > delta_m {
            // exact integral of Y dD along the line, Y = k δ² / 2
            next.dissipated += 0.5 * df * t1 * (delta_m - from) / (df - from);
            let t = t1 * (df - delta_m) / (df - from);
            next.damage = (1.0 - t / (k * delta_m)).clamp(state.damage, 1.0);
        } else {
            // reaches the end of the line, or a shift to a stiffer mode has
            // stored more than the energy left: the point fails completely
            next.dissipated = law.g;
            next.damage = 1.0;
        }
        next.delta_fail = df.max(from);
        next.delta_max = delta_m;
    }

    let keep = 1.0 - next.damage;
    let traction = Modes::new(
        if elastic.n < 0.0 { elastic.n } else { keep * elastic.n },
        keep * elastic.s,
        keep * elastic.t,
    );
    Ok((traction, next))
}

pub fn dissipated_energy(state: &CohesiveState) -> f64 {
    state.dissipated
}
