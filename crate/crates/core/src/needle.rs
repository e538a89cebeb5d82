//! Suture needle geometry.
//!
//! A needle is a circular arc, optionally perturbed by sinusoidal terms along
//! its arclength. The local frame puts the ideal arc midpoint at the origin
//! with the chord along +y and the arc bulging toward -x; the last centerline
//! sample is the needle tip.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::TaskConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn unit(self) -> Vector3<f64> {
        match self {
            Axis::X => Vector3::x(),
            Axis::Y => Vector3::y(),
            Axis::Z => Vector3::z(),
        }
    }
}

/// Displacement `amplitude * sin(pi * frequency * s)` along `axis`, where `s`
/// runs from 0 at the needle's swage end to 1 at its tip.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Irregularity {
    pub axis: Axis,
    pub amplitude: f64,
    #[serde(default = "default_frequency")]
    pub frequency: f64,
}

fn default_frequency() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeedleSpec {
    pub arc_radius: f64,
    pub arc_angle: f64,
    pub wire_radius: f64,
    #[serde(default)]
    pub irregularity: Vec<Irregularity>,
}

impl NeedleSpec {
    /// Registered variant (`N1` ... `N5`) from the embedded defaults.
    pub fn variant(name: &str) -> Result<NeedleSpec> {
        TaskConfig::defaults().needle(name)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.arc_radius > 0.0 && self.arc_radius.is_finite()) {
            return Err(Error::config("needle arc_radius must be positive"));
        }
        if !(self.arc_angle > 0.0 && self.arc_angle <= std::f64::consts::TAU) {
            return Err(Error::config("needle arc_angle must lie in (0, 2pi]"));
        }
        if !(self.wire_radius > 0.0 && self.wire_radius < self.arc_radius) {
            return Err(Error::config(
                "needle wire_radius must lie in (0, arc_radius)",
            ));
        }
        if self
            .irregularity
            .iter()
            .any(|t| !t.amplitude.is_finite() || !t.frequency.is_finite())
        {
            return Err(Error::config("needle irregularity terms must be finite"));
        }
        Ok(())
    }
}

/// Sampled needle in its local frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeedleGeometry {
    pub centerline: Vec<[f64; 3]>,
    pub wire_radius: f64,
}

impl NeedleGeometry {
    /// Every centerline sample is a graspable feature.
    pub fn features(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        self.centerline.iter().map(|p| Vector3::from(*p))
    }

    pub fn point(&self, index: usize) -> Vector3<f64> {
        Vector3::from(self.centerline[index])
    }

    pub fn tip_index(&self) -> usize {
        self.centerline.len() - 1
    }

    pub fn mid_index(&self) -> usize {
        self.centerline.len() / 2
    }

    /// Index at fraction `s` of the arclength.
    pub fn index_at(&self, s: f64) -> usize {
        let last = self.centerline.len() - 1;
        ((s.clamp(0.0, 1.0) * last as f64).round() as usize).min(last)
    }

    /// Lowest point of the wire surface below the local origin.
    pub fn min_z(&self) -> f64 {
        self.centerline
            .iter()
            .map(|p| p[2])
            .fold(f64::INFINITY, f64::min)
            - self.wire_radius
    }
}

/// Sample `samples` centerline points on the (perturbed) arc.
pub fn generate_needle(spec: &NeedleSpec, samples: usize) -> Result<NeedleGeometry> {
    spec.validate()?;
    if samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "needle needs at least 2 samples, got {samples}"
        )));
    }
    let r = spec.arc_radius;
    let half = spec.arc_angle / 2.0;
    let centerline = (0..samples)
        .map(|i| {
            let s = i as f64 / (samples - 1) as f64;
            let phi = -half + s * spec.arc_angle;
            let mut p = Vector3::new(r * (phi.cos() - 1.0), r * phi.sin(), 0.0);
            for term in &spec.irregularity {
                let d = term.amplitude * (std::f64::consts::PI * term.frequency * s).sin();
                p += term.axis.unit() * d;
            }
            [p.x, p.y, p.z]
        })
        .collect();
    Ok(NeedleGeometry {
        centerline,
        wire_radius: spec.wire_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ideal(r: f64, angle: f64) -> NeedleSpec {
        NeedleSpec {
            arc_radius: r,
            arc_angle: angle,
            wire_radius: 0.0005,
            irregularity: vec![],
        }
    }

    #[test]
    fn semicircle_endpoints_span_diameter() {
        let g = generate_needle(&ideal(0.010, PI), 3).unwrap();
        let a = g.point(0);
        let b = g.point(2);
        assert!(((a - b).norm() - 0.020).abs() < 1e-12);
    }

    #[test]
    fn zero_amplitude_stays_on_ideal_arc() {
        let mut spec = ideal(0.012, 3.0 * PI / 4.0);
        spec.irregularity = vec![Irregularity {
            axis: Axis::Z,
            amplitude: 0.0,
            frequency: 1.0,
        }];
        let g = generate_needle(&spec, 64).unwrap();
        let center = Vector3::new(-0.012, 0.0, 0.0);
        for p in g.features() {
            assert!(((p - center).norm() - 0.012).abs() < 1e-12);
            assert!(p.z.abs() < 1e-12);
        }
    }

    #[test]
    fn midpoint_is_local_origin() {
        let g = generate_needle(&ideal(0.012, 2.0), 33).unwrap();
        assert!(g.point(g.mid_index()).norm() < 1e-12);
    }

    #[test]
    fn registered_variants_follow_size_ordering() {
        let n1 = NeedleSpec::variant("N1").unwrap();
        for name in ["N2", "N3"] {
            assert!(NeedleSpec::variant(name).unwrap().arc_radius < n1.arc_radius);
        }
        assert_eq!(NeedleSpec::variant("N4").unwrap().irregularity.len(), 1);
        assert_eq!(NeedleSpec::variant("N5").unwrap().irregularity.len(), 2);
        assert!(NeedleSpec::variant("N9").is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate_needle(&ideal(0.0, 1.0), 4).is_err());
        assert!(generate_needle(&ideal(0.01, 7.0), 4).is_err());
        let mut fat = ideal(0.01, 1.0);
        fat.wire_radius = 0.02;
        assert!(generate_needle(&fat, 4).is_err());
        assert!(generate_needle(&ideal(0.01, 1.0), 1).is_err());
    }
}
