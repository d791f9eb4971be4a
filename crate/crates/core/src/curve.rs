//! Force–displacement curves and their CSV form.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CSV_HEADER: &str = "displacement_m,force_N";

#[derive(Debug, Error, PartialEq)]
pub enum CurveError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("curve has no samples")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    /// Driven displacement along the loading direction, m.
    pub displacement: f64,
    /// Reaction force along the loading direction, N.
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetadata {
    pub sample_rate_hz: Option<f64>,
    pub loading_direction: [f64; 3],
}

impl Default for CurveMetadata {
    fn default() -> Self {
        Self {
            sample_rate_hz: None,
            loading_direction: [1.0, 0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ForceDisplacementCurve {
    pub samples: Vec<CurveSample>,
    pub metadata: CurveMetadata,
}

/// Index of the largest force before `forces` first falls below
/// `drop_fraction` of its running maximum (first one on ties).
pub fn loading_peak_index(forces: &[f64], drop_fraction: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &f) in forces.iter().enumerate() {
        match best {
            Some(b) if forces[b] > 0.0 && f < drop_fraction * forces[b] => break,
            Some(b) if forces[b] >= f => {}
            _ => best = Some(i),
        }
    }
    best
}

impl ForceDisplacementCurve {
    pub fn new(samples: Vec<CurveSample>) -> Self {
        Self {
            samples,
            metadata: CurveMetadata::default(),
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        Self::new(
            pairs
                .into_iter()
                .map(|(displacement, force)| CurveSample { displacement, force })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_displacement(&self) -> f64 {
        self.samples.iter().map(|s| s.displacement).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sample with the largest force (first one on ties).
    pub fn peak(&self) -> Option<CurveSample> {
        self.samples
            .iter()
            .copied()
            .fold(None, |best: Option<CurveSample>, s| match best {
                Some(b) if b.force >= s.force => Some(b),
                _ => Some(s),
            })
    }

    /// Sample with the largest force before the force first falls below
    /// `drop_fraction` of its running maximum: the failure force of a curve
    /// that rings after failure. Equals [`Self::peak`] when the force never
    /// drops that far.
    pub fn loading_peak(&self, drop_fraction: f64) -> Option<CurveSample> {
        let forces: Vec<f64> = self.samples.iter().map(|s| s.force).collect();
        loading_peak_index(&forces, drop_fraction).map(|i| self.samples[i])
    }

    /// First sample whose force falls below `drop_fraction` of the running
    /// maximum, i.e. the end of the loading branch. `None` when the force
    /// never drops that far.
    pub fn first_drop(&self, drop_fraction: f64) -> Option<CurveSample> {
        let mut max = f64::NEG_INFINITY;
        for s in &self.samples {
            if max > 0.0 && s.force < drop_fraction * max {
                return Some(*s);
            }
            max = max.max(s.force);
        }
        None
    }

    /// Linear interpolation of force at displacement `d`, clamped to the end
    /// values outside the sampled range. Assumes non-decreasing displacement.
    pub fn force_at(&self, d: f64) -> Option<f64> {
        let s = &self.samples;
        let first = s.first()?;
        let last = s.last()?;
        if d <= first.displacement {
            return Some(first.force);
        }
        if d >= last.displacement {
            return Some(last.force);
        }
        let i = s.partition_point(|p| p.displacement <= d);
        let (a, b) = (s[i - 1], s[i]);
        let span = b.displacement - a.displacement;
        if span <= 0.0 {
            return Some(b.force);
        }
        let w = (d - a.displacement) / span;
        Some(a.force + w * (b.force - a.force))
    }

    /// Resamples onto a uniform displacement grid `0, step, 2·step, …` up to
    /// the largest sampled displacement.
    pub fn resample_uniform(&self, step: f64) -> Result<Self, CurveError> {
        if self.samples.is_empty() {
            return Err(CurveError::Empty);
        }
        let end = self.max_displacement();
        let n = ((end / step) * (1.0 + 1e-12)).floor().max(0.0) as usize;
        let samples = (0..=n)
            .map(|k| {
                let d = k as f64 * step;
                CurveSample {
                    displacement: d,
                    force: self.force_at(d).unwrap(),
                }
            })
            .collect();
        Ok(Self {
            samples,
            metadata: self.metadata.clone(),
        })
    }

    pub fn is_monotone_in_displacement(&self) -> bool {
        self.samples.windows(2).all(|w| w[1].displacement >= w[0].displacement)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(32 * (self.samples.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let _ = writeln!(out, "{:e},{:e}", s.displacement, s.force);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, CurveError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, header)) if header.trim() == CSV_HEADER => {}
            Some((i, header)) => {
                return Err(CurveError::Parse {
                    line: i + 1,
                    message: format!("expected header {CSV_HEADER:?}, found {:?}", header.trim()),
                })
            }
            None => return Err(CurveError::Empty),
        }
        let mut samples = Vec::new();
        for (i, line) in lines {
            let parse = |field: Option<&str>, what: &str| -> Result<f64, CurveError> {
                field
                    .map(str::trim)
                    .ok_or_else(|| format!("missing {what}"))
                    .and_then(|f| f.parse::<f64>().map_err(|e| format!("bad {what} {f:?}: {e}")))
                    .map_err(|message| CurveError::Parse { line: i + 1, message })
            };
            let mut fields = line.split(',');
            let displacement = parse(fields.next(), "displacement")?;
            let force = parse(fields.next(), "force")?;
            if fields.next().is_some() {
                return Err(CurveError::Parse {
                    line: i + 1,
                    message: "expected two columns".into(),
                });
            }
            samples.push(CurveSample { displacement, force });
        }
        Ok(Self::new(samples))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_and_clamping() {
        let c = ForceDisplacementCurve::from_pairs([(0.0, 0.0), (1.0, 2.0), (2.0, 0.0)]);
        assert_eq!(c.force_at(0.5), Some(1.0));
        assert_eq!(c.force_at(1.5), Some(1.0));
        assert_eq!(c.force_at(-1.0), Some(0.0));
        assert_eq!(c.force_at(3.0), Some(0.0));
        assert_eq!(c.peak().unwrap().displacement, 1.0);
    }

    #[test]
    fn loading_peak_ignores_ringing_after_the_drop() {
        let c = ForceDisplacementCurve::from_pairs([(0.0, 0.0), (1.0, 2.0), (2.0, 0.5), (3.0, 2.5), (4.0, -1.0)]);
        assert_eq!(c.peak().unwrap().displacement, 3.0);
        assert_eq!(c.loading_peak(0.5).unwrap().displacement, 1.0);
        let monotone = ForceDisplacementCurve::from_pairs([(0.0, 0.0), (1.0, 1.0), (2.0, 3.0)]);
        assert_eq!(monotone.loading_peak(0.5), monotone.peak());
        assert_eq!(loading_peak_index(&[], 0.5), None);
        assert_eq!(c.first_drop(0.5).unwrap().displacement, 2.0);
        assert_eq!(monotone.first_drop(0.5), None);
    }

    #[test]
    fn resample_grid() {
        let c = ForceDisplacementCurve::from_pairs([(0.0, 0.0), (1.0, 1.0)]);
        let r = c.resample_uniform(0.25).unwrap();
        assert_eq!(r.len(), 5);
        assert_eq!(r.samples[3].force, 0.75);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let c = ForceDisplacementCurve::from_pairs([(0.0, 0.0), (1.0 / 3.0, -2.0e-7), (0.1 + 0.2, 1e300)]);
        let back = ForceDisplacementCurve::from_csv(&c.to_csv()).unwrap();
        assert_eq!(back.samples, c.samples);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        assert!(matches!(
            ForceDisplacementCurve::from_csv("d,f\n1,2\n"),
            Err(CurveError::Parse { line: 1, .. })
        ));
        assert_eq!(
            ForceDisplacementCurve::from_csv("displacement_m,force_N\n1,2\n3,x\n").unwrap_err(),
            CurveError::Parse {
                line: 3,
                message: "bad force \"x\": invalid float literal".into()
            }
        );
    }
}
