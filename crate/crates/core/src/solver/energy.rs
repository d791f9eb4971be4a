//! Energy ledger samples and the quasi-static audit.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Kinetic energy above this fraction of the internal elastic energy marks
/// an instant as not quasi-static.
pub const KINETIC_RATIO_LIMIT: f64 = 0.05;

/// The kinetic ratio is only audited once the internal energy exceeds this
/// fraction of its peak; at the very start both energies vanish and their
/// ratio carries no information.
pub const AUDIT_FLOOR: f64 = 0.01;

/// Imbalance tolerated at output times, as a fraction of
/// `max(external_work, kinetic)`.
pub const BALANCE_TOLERANCE: f64 = 0.02;

/// The balance is only audited once `max(external_work, kinetic)` exceeds
/// this fraction of its peak; below that the energies are at roundoff level.
pub const BALANCE_FLOOR: f64 = 1e-6;

/// Ledger snapshot at an output time. Energies in J.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergySample {
    pub time: f64,
    pub displacement: f64,
    pub force: f64,
    pub kinetic: f64,
    /// Elastic energy of the bulk plus recoverable cohesive energy.
    pub internal_elastic: f64,
    pub hourglass: f64,
    pub cohesive_dissipated: f64,
    pub external_work: f64,
    pub damping_work: f64,
    /// Largest damage over all cohesive integration points.
    pub max_damage: f64,
}

impl EnergySample {
    pub fn imbalance(&self) -> f64 {
        self.external_work
            - (self.kinetic + self.internal_elastic + self.hourglass + self.cohesive_dissipated + self.damping_work)
    }

    /// `max(|external_work|, kinetic)`, the reference for the balance check.
    pub fn balance_scale(&self) -> f64 {
        self.external_work.abs().max(self.kinetic)
    }

    /// `|imbalance| / balance_scale`, zero when both vanish.
    pub fn imbalance_fraction(&self) -> f64 {
        let scale = self.balance_scale();
        let imbalance = self.imbalance().abs();
        if scale > 0.0 {
            imbalance / scale
        } else if imbalance == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub sample: EnergySample,
    /// `None` while the internal energy is below the audit floor.
    pub kinetic_ratio: Option<f64>,
    /// `None` while the energies are below the balance floor.
    pub imbalance_fraction: Option<f64>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub rows: Vec<EnergyRow>,
    pub max_kinetic_ratio: f64,
    pub max_imbalance_fraction: f64,
    /// Largest hourglass-to-internal energy ratio within the audited range.
    pub max_hourglass_ratio: f64,
    /// Times at which the kinetic ratio exceeded the limit.
    pub flagged_times: Vec<f64>,
}

impl EnergyReport {
    pub fn quasi_static(&self) -> bool {
        self.flagged_times.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "time_s,displacement_m,force_N,kinetic_J,internal_elastic_J,hourglass_J,cohesive_dissipated_J,\
             external_work_J,damping_work_J,kinetic_ratio,imbalance_fraction,flagged\n",
        );
        for r in &self.rows {
            let s = &r.sample;
            let ratio = r.kinetic_ratio.map(|x| format!("{x:e}")).unwrap_or_default();
            let imbalance = r.imbalance_fraction.map(|x| format!("{x:e}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{},{}",
                s.time,
                s.displacement,
                s.force,
                s.kinetic,
                s.internal_elastic,
                s.hourglass,
                s.cohesive_dissipated,
                s.external_work,
                s.damping_work,
                ratio,
                imbalance,
                u8::from(r.flagged)
            );
        }
        out
    }
}

/// Audits a run history for kinetic-energy dominance and energy balance.
pub fn energy_report(history: &[EnergySample]) -> EnergyReport {
    let peak = history.iter().map(|s| s.internal_elastic).fold(0.0, f64::max);
    let peak_scale = history.iter().map(EnergySample::balance_scale).fold(0.0, f64::max);
    let mut max_kinetic_ratio: f64 = 0.0;
    let mut max_imbalance_fraction: f64 = 0.0;
    let mut max_hourglass_ratio: f64 = 0.0;
    let mut flagged_times = Vec::new();
    let rows = history
        .iter()
        .map(|s| {
            let audited = peak > 0.0 && s.internal_elastic >= AUDIT_FLOOR * peak;
            let kinetic_ratio = audited.then(|| s.kinetic / s.internal_elastic);
            let flagged = kinetic_ratio.is_some_and(|r| r > KINETIC_RATIO_LIMIT);
            if let Some(r) = kinetic_ratio {
                max_kinetic_ratio = max_kinetic_ratio.max(r);
                max_hourglass_ratio = max_hourglass_ratio.max(s.hourglass / s.internal_elastic);
            }
            if flagged {
                flagged_times.push(s.time);
            }
            let imbalance_fraction =
                (peak_scale > 0.0 && s.balance_scale() >= BALANCE_FLOOR * peak_scale).then(|| s.imbalance_fraction());
            if let Some(f) = imbalance_fraction {
                max_imbalance_fraction = max_imbalance_fraction.max(f);
            }
            EnergyRow {
                sample: *s,
                kinetic_ratio,
                imbalance_fraction,
                flagged,
            }
        })
        .collect();
    EnergyReport {
        rows,
        max_kinetic_ratio,
        max_imbalance_fraction,
        max_hourglass_ratio,
        flagged_times,
    }
}
