//! Performance measures: range of flexion, bowstringing and pulley stress.

use crate::error::{Result, TpsError};
use crate::geometry::{self, ClosestCase, SystemGeometry, TendonPolyline};
use crate::model::{Point, PulleySpec, Tendon, TpsConfiguration, JOINT_NAMES};

/// Total flexion `Σθ`, degrees.
pub fn range_of_flexion(theta: &[f64; 3]) -> f64 {
    theta.iter().sum::<f64>().to_degrees()
}

/// Distance from joint `joint` to the tendon span that crosses it, with the
/// closest point clamped to the span. `None` when the tendon does not cross
/// the joint.
pub fn bowstringing(joint: usize, polyline: &TendonPolyline, joints: &[Point; 3]) -> Option<(f64, ClosestCase)> {
    let span = polyline.span_across(joint)?;
    let z = joints[joint];
    Some(match geometry::point_segment_distance(z, span.start, span.end) {
        Ok(d) => (d.distance, d.case),
        Err(_) => ((z - span.start).norm(), ClosestCase::Start),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BowstringEntry {
    pub joint: usize,
    pub tendon: Tendon,
    pub value: f64,
    pub case: ClosestCase,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BowstringReport {
    pub entries: Vec<BowstringEntry>,
    /// Largest entry over the joints not excluded.
    pub critical: Option<BowstringEntry>,
}

impl BowstringReport {
    pub fn critical_joint_name(&self) -> Option<&'static str> {
        self.critical.map(|c| JOINT_NAMES[c.joint])
    }
}

pub fn bowstring_report(geometry: &SystemGeometry, exclude: &[bool; 3]) -> BowstringReport {
    let mut entries = Vec::new();
    for p in &geometry.polylines {
        for joint in 0..3 {
            if let Some((value, case)) = bowstringing(joint, p, &geometry.joints) {
                entries.push(BowstringEntry {
                    joint,
                    tendon: p.tendon,
                    value,
                    case,
                });
            }
        }
    }
    let critical = entries
        .iter()
        .filter(|e| !exclude[e.joint])
        .fold(None::<BowstringEntry>, |best, e| match best {
            Some(b) if b.value >= e.value => Some(b),
            _ => Some(*e),
        });
    BowstringReport { entries, critical }
}

/// Stress at the base of one pulley, MPa.
#[derive(Debug, Clone, PartialEq)]
pub struct StressBreakdown {
    pub pulley: usize,
    pub label: String,
    pub sigma_axial: f64,
    pub sigma_bending: f64,
    pub sigma_net: f64,
    /// Whether any tendon engages the pulley.
    pub active: bool,
    /// Wrap angles of the most loaded engaging tendon, rad.
    pub phi1: f64,
    pub phi2: f64,
}

/// Axial and bending stress at a pulley base for one tendon of tension `t`
/// wrapping at angles `phi1`, `phi2`. The base is a `width × depth` section.
pub fn stress_from_angles(pulley: &PulleySpec, t: f64, phi1: f64, phi2: f64) -> Result<(f64, f64)> {
    let (w, d, h) = (pulley.width, pulley.depth, pulley.height);
    if !(w > 0.0 && d > 0.0) {
        return Err(TpsError::DegeneratePulley {
            label: pulley.label.clone(),
            width: w,
            depth: d,
        });
    }
    let axial = t * (phi1.cos() + phi2.cos()) / (w * d);
    let inertia = d * w.powi(3) / 12.0;
    let bending = h * t * (phi1.sin() - phi2.sin()) * (0.5 * w) / inertia;
    Ok((axial, bending))
}

/// Stress at pulley `pulley`, summing the contributions of every tendon that
/// engages it. Inactive pulleys carry no stress.
pub fn pulley_stress(
    config: &TpsConfiguration,
    geometry: &SystemGeometry,
    pulley: usize,
    t1: f64,
    t2: f64,
) -> Result<StressBreakdown> {
    let spec = &config.pulleys[pulley];
    if !spec.kind.bears_stress() {
        return Err(TpsError::Unsupported(format!("{} is not a pulley", spec.label)));
    }
    if !(spec.width > 0.0 && spec.depth > 0.0) {
        return Err(TpsError::DegeneratePulley {
            label: spec.label.clone(),
            width: spec.width,
            depth: spec.depth,
        });
    }
    let mut out = StressBreakdown {
        pulley,
        label: spec.label.clone(),
        sigma_axial: 0.0,
        sigma_bending: 0.0,
        sigma_net: 0.0,
        active: false,
        phi1: 0.0,
        phi2: 0.0,
    };
    let mut heaviest = f64::NEG_INFINITY;
    for p in &geometry.polylines {
        let Some((prev, next)) = p.neighbours(pulley) else {
            continue;
        };
        let t = match p.tendon {
            Tendon::Fdp => t1,
            Tendon::Fds => t2,
        };
        let (phi1, phi2) = geometry::flexion_angles(&geometry.frames[pulley], prev, next);
        let (a, b) = stress_from_angles(spec, t, phi1, phi2)?;
        out.sigma_axial += a;
        out.sigma_bending += b;
        out.active = true;
        if t > heaviest {
            heaviest = t;
            out.phi1 = phi1;
            out.phi2 = phi2;
        }
    }
    out.sigma_net = out.sigma_axial.abs() + out.sigma_bending.abs();
    Ok(out)
}

/// Metrics of one equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub bowstring: BowstringReport,
    /// One entry per stress-bearing pulley, or the reason stress is undefined.
    pub stresses: std::result::Result<Vec<StressBreakdown>, TpsError>,
}

impl StepMetrics {
    /// Pulley with the largest net stress; the most proximal wins ties.
    pub fn critical_stress(&self) -> Result<Option<&StressBreakdown>> {
        let list = self.stresses.as_ref().map_err(Clone::clone)?;
        Ok(list.iter().fold(None::<&StressBreakdown>, |best, s| match best {
            Some(b) if b.sigma_net >= s.sigma_net => Some(b),
            _ => Some(s),
        }))
    }
}

/// Bowstringing and stress at a solved geometry.
pub fn evaluate(
    config: &TpsConfiguration,
    geometry: &SystemGeometry,
    t1: f64,
    t2: f64,
    exclude: &[bool; 3],
) -> StepMetrics {
    let stresses = config
        .pulleys
        .iter()
        .enumerate()
        .filter(|(_, p)| p.kind.bears_stress())
        .map(|(i, _)| pulley_stress(config, geometry, i, t1, t2))
        .collect();
    StepMetrics {
        bowstring: bowstring_report(geometry, exclude),
        stresses,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::resolve_geometry;
    use crate::model::{build_configuration, ParameterMap, PulleyKind};
    use approx::assert_abs_diff_eq;

    fn spec(h: f64, w: f64) -> PulleySpec {
        PulleySpec {
            label: "A2".into(),
            phalange: 1,
            kind: PulleyKind::Stiff,
            x: 21.0,
            height: h,
            width: w,
            depth: 10.0,
        }
    }

    #[test]
    fn symmetric_wrap_is_pure_axial() {
        let (a, b) = stress_from_angles(&spec(0.5, 1.0), 8.0, 60f64.to_radians(), 60f64.to_radians()).unwrap();
        assert_abs_diff_eq!(a, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn asymmetric_wrap_bends() {
        let (a, b) = stress_from_angles(&spec(0.5, 1.0), 8.0, 90f64.to_radians(), 30f64.to_radians()).unwrap();
        assert_abs_diff_eq!(a, 0.692_820_323_027_551, epsilon = 1e-12);
        assert_abs_diff_eq!(b, 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(a.abs() + b.abs(), 1.892_820_323_027_551, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_section_is_rejected() {
        assert!(stress_from_angles(&spec(0.5, 0.0), 8.0, 0.1, 0.1).is_err());
        let mut s = spec(0.5, 1.0);
        s.depth = 0.0;
        assert!(stress_from_angles(&s, 8.0, 0.1, 0.1).is_err());
    }

    #[test]
    fn rof_in_degrees() {
        assert_abs_diff_eq!(range_of_flexion(&[1.0, 0.5, 0.25]), 1.75f64.to_degrees());
    }

    #[test]
    fn inactive_pulley_carries_no_stress() {
        let mut o = ParameterMap::new();
        o.insert("h_c".into(), "3.0".into());
        let c = build_configuration("CD-C-C", &o).unwrap();
        let g = resolve_geometry(&c, &[0.0; 3], None, None).unwrap();
        let c1 = c.pulley_index("C1").unwrap();
        let s = pulley_stress(&c, &g, c1, 8.0, 0.0).unwrap();
        assert!(!s.active);
        assert_eq!(s.sigma_net, 0.0);
    }

    #[test]
    fn bowstring_clamps_to_span() {
        let c = build_configuration("C-C-C", &ParameterMap::new()).unwrap();
        let theta = [0.6, 1.2, 0.9];
        let g = resolve_geometry(&c, &theta, None, None).unwrap();
        let r = bowstring_report(&g, &[false; 3]);
        assert_eq!(r.entries.len(), 3);
        for e in &r.entries {
            // oracle: dense sampling of the crossing span
            let span = g.polylines[0].span_across(e.joint).unwrap();
            let z = g.joints[e.joint];
            let sampled = (0..=10_000)
                .map(|k| (z - (span.start + (k as f64 / 10_000.0) * (span.end - span.start))).norm())
                .fold(f64::INFINITY, f64::min);
            assert!((e.value - sampled).abs() < 1e-2 * span.length() / 1000.0 + 1e-9);
        }
        let excluded = bowstring_report(&g, &[true, true, true]);
        assert!(excluded.critical.is_none());
    }
}
