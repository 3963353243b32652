//! Domain types for the planar finger model and its tendon-pulley system.
//!
//! All angles are stored in radians and all lengths in millimetres. Joint
//! stiffnesses are quoted per degree in the literature and converted to
//! N·mm/rad once, when a [`FingerModel`] is constructed.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Result, TpsError};
use crate::study::{self, GroupKind, OffsetMode};

/// Planar point in millimetres, `re` along the extended finger, `im` dorsal.
pub type Point = Complex64;

pub const JOINT_NAMES: [&str; 3] = ["MCP", "PIP", "DIP"];

/// Default pulley height, mm.
pub const DEFAULT_HEIGHT: f64 = 0.5;
/// Default pulley width, mm.
pub const DEFAULT_WIDTH: f64 = 1.0;
/// Default out-of-plane pulley thickness, mm.
pub const DEFAULT_DEPTH: f64 = 10.0;
/// Default location offset for P/D positions, mm.
pub const DEFAULT_OFFSET: f64 = 4.0;
/// Default peak tension, N.
pub const DEFAULT_MAX_TENSION: f64 = 8.0;
/// Default number of tension increments.
pub const DEFAULT_STEPS: usize = 200;

pub fn per_degree_to_per_radian(k: f64) -> f64 {
    k * 180.0 / PI
}

pub fn per_radian_to_per_degree(k: f64) -> f64 {
    k * PI / 180.0
}

/// Index of a joint by its anatomical name (case insensitive).
pub fn joint_index(name: &str) -> Option<usize> {
    JOINT_NAMES
        .iter()
        .position(|j| j.eq_ignore_ascii_case(name.trim()))
}

/// Three-phalanx finger idealised as rigid bones joined by flexure hinges.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerModel {
    /// Joint-to-joint phalange lengths (PP, IP, DP), mm.
    pub lengths: [f64; 3],
    /// Bone half-widths `b_j`, mm.
    pub half_widths: [f64; 3],
    /// Torsional joint stiffnesses, N·mm/rad.
    pub stiffness: [f64; 3],
    /// Neutral joint angles, rad.
    pub neutral: [f64; 3],
    /// Joint limits, rad.
    pub limits: [f64; 3],
    /// Flexure length, mm.
    pub flexure_length: f64,
    /// Ground (guide) pulley location shared by both tendons, mm.
    pub ground: Point,
}

impl FingerModel {
    /// Builds a validated model. `stiffness_per_degree` is in N·mm/deg and
    /// angles are in degrees, matching how finger data is usually tabulated.
    pub fn from_table_units(
        lengths: [f64; 3],
        bone_widths: [f64; 3],
        stiffness_per_degree: [f64; 3],
        neutral_deg: [f64; 3],
        limits_deg: [f64; 3],
        flexure_length: f64,
        ground: Point,
    ) -> Result<Self> {
        let model = Self {
            lengths,
            half_widths: bone_widths.map(|w| 0.5 * w),
            stiffness: stiffness_per_degree.map(per_degree_to_per_radian),
            neutral: neutral_deg.map(f64::to_radians),
            limits: limits_deg.map(f64::to_radians),
            flexure_length,
            ground,
        };
        model.validate()?;
        Ok(model)
    }

    /// Default index finger.
    pub fn index_finger() -> Self {
        Self::from_table_units(
            [42.0, 27.0, 19.5],
            [7.0; 3],
            [0.95, 0.60, 0.60],
            [0.0; 3],
            [90.0, 100.0, 80.0],
            5.0,
            Point::new(-7.5, -5.0),
        )
        .expect("default finger data is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.flexure_length > 0.0) {
            return Err(TpsError::InvalidModel("flexure length must be positive".into()));
        }
        for j in 0..3 {
            let name = JOINT_NAMES[j];
            if !(self.lengths[j] > self.flexure_length) {
                return Err(TpsError::InvalidModel(format!(
                    "phalange {} length {} must exceed the flexure length {}",
                    j + 1,
                    self.lengths[j],
                    self.flexure_length
                )));
            }
            if !(self.half_widths[j] > 0.0) {
                return Err(TpsError::InvalidModel(format!(
                    "bone half-width of phalange {} must be positive",
                    j + 1
                )));
            }
            if !(self.stiffness[j] > 0.0) {
                return Err(TpsError::InvalidModel(format!("{name} stiffness must be positive")));
            }
            if !(self.limits[j] > self.neutral[j]) {
                return Err(TpsError::InvalidModel(format!(
                    "{name} limit must exceed its neutral angle"
                )));
            }
        }
        if !(self.ground.re.is_finite() && self.ground.im.is_finite()) {
            return Err(TpsError::InvalidModel("ground point must be finite".into()));
        }
        Ok(())
    }

    pub fn stiffness_per_degree(&self) -> [f64; 3] {
        self.stiffness.map(per_radian_to_per_degree)
    }

    /// Sum of the joint ranges, rad.
    pub fn full_range(&self) -> f64 {
        (0..3).map(|j| self.limits[j] - self.neutral[j]).sum()
    }
}

impl Default for FingerModel {
    fn default() -> Self {
        Self::index_finger()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PulleyKind {
    /// Annular pulley, rigidly fixed normal to the bone.
    Stiff,
    /// Cruciate pulley: inextensible but free to tilt about its base.
    Flexible,
    /// Tendon attachment point (TAP).
    Attachment,
    /// Fixed guide pulley on the metacarpal.
    Ground,
}

impl PulleyKind {
    pub fn bears_stress(self) -> bool {
        matches!(self, PulleyKind::Stiff | PulleyKind::Flexible)
    }
}

/// One pulley, tendon attachment point or the ground pulley.
#[derive(Debug, Clone, PartialEq)]
pub struct PulleySpec {
    pub label: String,
    /// Phalange index 1..=3; 0 for the ground pulley.
    pub phalange: usize,
    pub kind: PulleyKind,
    /// Position along the phalange from its proximal joint, mm.
    pub x: f64,
    pub height: f64,
    pub width: f64,
    /// Out-of-plane depth, mm.
    pub depth: f64,
}

impl PulleySpec {
    pub fn ground() -> Self {
        Self {
            label: "G".into(),
            phalange: 0,
            kind: PulleyKind::Ground,
            x: 0.0,
            height: 0.0,
            width: 0.0,
            depth: DEFAULT_DEPTH,
        }
    }

    pub fn validate(&self, finger: &FingerModel) -> Result<()> {
        if self.kind == PulleyKind::Ground {
            return if self.phalange == 0 && self.height == 0.0 && self.width == 0.0 {
                Ok(())
            } else {
                Err(TpsError::InvalidModel(format!(
                    "ground pulley {} must have zero height and width",
                    self.label
                )))
            };
        }
        if !(1..=3).contains(&self.phalange) {
            return Err(TpsError::InvalidModel(format!(
                "pulley {} on unknown phalange {}",
                self.label, self.phalange
            )));
        }
        let length = finger.lengths[self.phalange - 1];
        if !(self.x > 0.0 && self.x < length) {
            return Err(TpsError::PulleyOutsidePhalange {
                label: self.label.clone(),
                phalange: self.phalange,
                x: self.x,
                length,
            });
        }
        if !(self.height >= 0.0 && self.width >= 0.0) {
            return Err(TpsError::InvalidModel(format!(
                "pulley {} must have non-negative height and width",
                self.label
            )));
        }
        if self.kind.bears_stress() && !(self.depth > 0.0) {
            return Err(TpsError::InvalidModel(format!(
                "pulley {} must have positive depth",
                self.label
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tendon {
    Fdp,
    Fds,
}

impl Tendon {
    pub fn name(self) -> &'static str {
        match self {
            Tendon::Fdp => "FDP",
            Tendon::Fds => "FDS",
        }
    }
}

impl fmt::Display for Tendon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered pulley sequence of one tendon, as indices into
/// [`TpsConfiguration::pulleys`]. Starts at the ground pulley and ends at the TAP.
#[derive(Debug, Clone, PartialEq)]
pub struct TendonRoute {
    pub tendon: Tendon,
    pub points: Vec<usize>,
}

/// Geometric parameters of the named configuration grammar.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigParams {
    /// Height and width of the A-pulleys.
    pub h_a: f64,
    pub w_a: f64,
    /// Height and width of the C-pulleys.
    pub h_c: f64,
    pub w_c: f64,
    /// Height of the tendon attachment points.
    pub h_tap: f64,
    pub depth: f64,
    pub offsets: OffsetMode,
}

impl Default for ConfigParams {
    fn default() -> Self {
        Self {
            h_a: DEFAULT_HEIGHT,
            w_a: DEFAULT_WIDTH,
            h_c: DEFAULT_HEIGHT,
            w_c: DEFAULT_WIDTH,
            h_tap: DEFAULT_HEIGHT,
            depth: DEFAULT_DEPTH,
            offsets: OffsetMode::Uniform(DEFAULT_OFFSET),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    /// Final total tension `T_s = T1 + T2`, N.
    pub t_max: f64,
    pub steps: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            t_max: DEFAULT_MAX_TENSION,
            steps: DEFAULT_STEPS,
        }
    }
}

/// Fully resolved tendon-pulley system.
#[derive(Debug, Clone, PartialEq)]
pub struct TpsConfiguration {
    pub name: String,
    pub finger: FingerModel,
    /// Every point used by any route; index 0 is the shared ground pulley.
    pub pulleys: Vec<PulleySpec>,
    pub routes: Vec<TendonRoute>,
    /// Tension ratio `T2 / T_s`.
    pub gamma: f64,
    pub params: ConfigParams,
    pub sweep: SweepSettings,
}

impl TpsConfiguration {
    /// Assembles a configuration from explicit parts and checks every route invariant.
    pub fn new(
        name: impl Into<String>,
        finger: FingerModel,
        pulleys: Vec<PulleySpec>,
        routes: Vec<TendonRoute>,
        gamma: f64,
    ) -> Result<Self> {
        let config = Self {
            name: name.into(),
            finger,
            pulleys,
            routes,
            gamma,
            params: ConfigParams::default(),
            sweep: SweepSettings::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.finger.validate()?;
        if self.pulleys.first().map(|p| p.kind) != Some(PulleyKind::Ground) {
            return Err(TpsError::InvalidModel("pulley 0 must be the ground pulley".into()));
        }
        for p in &self.pulleys {
            p.validate(&self.finger)?;
        }
        if self.routes.is_empty() || self.routes.len() > 2 {
            return Err(TpsError::InvalidModel("one or two tendon routes required".into()));
        }
        if self.routes.len() == 2 && self.routes[0].tendon == self.routes[1].tendon {
            return Err(TpsError::InvalidModel("duplicate tendon route".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(TpsError::InvalidParameter {
                key: "gamma".into(),
                value: self.gamma.to_string(),
                reason: "must lie in [0, 1]".into(),
            });
        }
        for route in &self.routes {
            self.validate_route(route)?;
        }
        let has = |t| self.routes.iter().any(|r| r.tendon == t);
        let expected_gamma = match (has(Tendon::Fdp), has(Tendon::Fds)) {
            (true, false) => Some(0.0),
            (false, true) => Some(1.0),
            _ => None,
        };
        if let Some(g) = expected_gamma {
            if self.gamma != g {
                return Err(TpsError::InvalidParameter {
                    key: "gamma".into(),
                    value: self.gamma.to_string(),
                    reason: "a single-tendon configuration fixes the tension ratio".into(),
                });
            }
        }
        Ok(())
    }

    fn validate_route(&self, route: &TendonRoute) -> Result<()> {
        let pts = &route.points;
        if pts.len() < 2 {
            return Err(TpsError::InvalidModel(format!("{} route too short", route.tendon)));
        }
        if let Some(&bad) = pts.iter().find(|&&i| i >= self.pulleys.len()) {
            return Err(TpsError::InvalidModel(format!("route references pulley {bad}")));
        }
        if self.pulleys[pts[0]].kind != PulleyKind::Ground {
            return Err(TpsError::InvalidModel(format!(
                "{} route must start at the ground pulley",
                route.tendon
            )));
        }
        let last = &self.pulleys[*pts.last().unwrap()];
        if last.kind != PulleyKind::Attachment {
            return Err(TpsError::InvalidModel(format!(
                "{} route must end at an attachment point",
                route.tendon
            )));
        }
        for w in pts[1..].windows(2) {
            let (a, b) = (&self.pulleys[w[0]], &self.pulleys[w[1]]);
            if (a.phalange, a.x) >= (b.phalange, b.x) || a.phalange > b.phalange {
                return Err(TpsError::RouteOrder(b.label.clone()));
            }
        }
        for &i in &pts[1..pts.len() - 1] {
            let kind = self.pulleys[i].kind;
            if !kind.bears_stress() {
                return Err(TpsError::InvalidModel(format!(
                    "interior route point {} must be a pulley",
                    self.pulleys[i].label
                )));
            }
        }
        if route.tendon == Tendon::Fds {
            if let Some(&i) = pts.iter().find(|&&i| self.pulleys[i].phalange == 3) {
                return Err(TpsError::FdsOnDistalPhalange(self.pulleys[i].label.clone()));
            }
        }
        Ok(())
    }

    pub fn route(&self, tendon: Tendon) -> Option<&TendonRoute> {
        self.routes.iter().find(|r| r.tendon == tendon)
    }

    pub fn has_tendon(&self, tendon: Tendon) -> bool {
        self.route(tendon).is_some()
    }

    /// Tendon tensions `(T1, T2)` for a total tension `T_s`.
    pub fn tensions(&self, total: f64) -> (f64, f64) {
        ((1.0 - self.gamma) * total, self.gamma * total)
    }

    pub fn tension_of(&self, tendon: Tendon, total: f64) -> f64 {
        let (t1, t2) = self.tensions(total);
        match tendon {
            Tendon::Fdp => t1,
            Tendon::Fds => t2,
        }
    }

    /// Largest individual tendon tension for a total `T_s`.
    pub fn tendon_tension(&self, total: f64) -> f64 {
        let (t1, t2) = self.tensions(total);
        t1.max(t2)
    }

    /// Total tension `T_s` at which the most loaded tendon carries `per_tendon`.
    pub fn total_for_tendon_tension(&self, per_tendon: f64) -> f64 {
        per_tendon / self.gamma.max(1.0 - self.gamma)
    }

    pub fn pulley_index(&self, label: &str) -> Option<usize> {
        self.pulleys.iter().position(|p| p.label == label)
    }
}

/// Parameter overrides keyed by name, as given on the command line or in a
/// configuration file.
pub type ParameterMap = BTreeMap<String, String>;

fn canonical_key(key: &str) -> Option<&'static str> {
    let k = key.trim();
    Some(match k {
        "h_a" | "ha" => "h_a",
        "h_c" | "hc" => "h_c",
        "w_a" | "wa" => "w_a",
        "w_c" | "wc" => "w_c",
        "h_tap" | "h_5" | "h5" => "h_tap",
        "depth" | "D" | "t0" | "t_0" => "depth",
        "e" | "offset" => "e",
        "offsets" => "offsets",
        "gamma" | "γ" => "gamma",
        "T_max" | "t_max" | "tmax" | "T_m" => "t_max",
        "steps" | "n" => "steps",
        "l1" | "l_1" => "l1",
        "l2" | "l_2" => "l2",
        "l3" | "l_3" => "l3",
        "bone_width" | "b0" | "b_0" => "bone_width",
        "K1" | "k1" => "k1",
        "K2" | "k2" => "k2",
        "K3" | "k3" => "k3",
        "theta0_1" => "theta0_1",
        "theta0_2" => "theta0_2",
        "theta0_3" => "theta0_3",
        "theta_max1" | "theta_max_1" => "theta_max1",
        "theta_max2" | "theta_max_2" => "theta_max2",
        "theta_max3" | "theta_max_3" => "theta_max3",
        "lf" | "l_f" => "lf",
        "xg" | "X_g" => "xg",
        "yg" | "Y_g" => "yg",
        _ => return None,
    })
}

fn parse_number(key: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| TpsError::InvalidParameter {
            key: key.into(),
            value: value.into(),
            reason: "expected a finite number".into(),
        })
}

fn positive(key: &str, value: &str) -> Result<f64> {
    let v = parse_number(key, value)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(TpsError::InvalidParameter {
            key: key.into(),
            value: value.into(),
            reason: "must be positive".into(),
        })
    }
}

fn non_negative(key: &str, value: &str) -> Result<f64> {
    let v = parse_number(key, value)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(TpsError::InvalidParameter {
            key: key.into(),
            value: value.into(),
            reason: "must not be negative".into(),
        })
    }
}

/// Resolves a configuration name plus overrides into a validated system.
///
/// Defaults come from the index finger wherever an override is absent. For two-tendon
/// (`=`) names the FDS attachment is co-located with the proximal tip corner
/// of A4, so both tendons follow the same path up to that pulley.
pub fn build_configuration(name: &str, overrides: &ParameterMap) -> Result<TpsConfiguration> {
    let parsed = study::parse_config_name(name)?;
    let mut params = ConfigParams::default();
    let mut sweep = SweepSettings::default();
    let mut gamma: Option<f64> = None;

    let table = FingerModel::index_finger();
    let mut lengths = table.lengths;
    let mut bone_widths = table.half_widths.map(|b| 2.0 * b);
    let mut k_deg = table.stiffness_per_degree();
    let mut neutral_deg = table.neutral.map(f64::to_degrees);
    let mut limits_deg = table.limits.map(f64::to_degrees);
    let mut lf = table.flexure_length;
    let mut ground = table.ground;

    for (raw_key, value) in overrides {
        let key = canonical_key(raw_key).ok_or_else(|| TpsError::UnknownParameter(raw_key.clone()))?;
        match key {
            "h_a" => params.h_a = non_negative(key, value)?,
            "h_c" => params.h_c = non_negative(key, value)?,
            "w_a" => params.w_a = non_negative(key, value)?,
            "w_c" => params.w_c = non_negative(key, value)?,
            "h_tap" => params.h_tap = non_negative(key, value)?,
            "depth" => params.depth = positive(key, value)?,
            "e" => params.offsets = OffsetMode::parse(value)?,
            "offsets" => {
                let list = value
                    .split(',')
                    .map(|v| positive(key, v))
                    .collect::<Result<Vec<_>>>()?;
                params.offsets = OffsetMode::PerPoint(list);
            }
            "gamma" => {
                let g = parse_number(key, value)?;
                if !(0.0..=1.0).contains(&g) {
                    return Err(TpsError::InvalidParameter {
                        key: key.into(),
                        value: value.clone(),
                        reason: "must lie in [0, 1]".into(),
                    });
                }
                gamma = Some(g);
            }
            "t_max" => sweep.t_max = non_negative(key, value)?,
            "steps" => {
                sweep.steps = value
                    .trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| TpsError::InvalidParameter {
                        key: key.into(),
                        value: value.clone(),
                        reason: "expected an integer >= 1".into(),
                    })?
            }
            "l1" => lengths[0] = positive(key, value)?,
            "l2" => lengths[1] = positive(key, value)?,
            "l3" => lengths[2] = positive(key, value)?,
            "bone_width" => bone_widths = [positive(key, value)?; 3],
            "k1" => k_deg[0] = positive(key, value)?,
            "k2" => k_deg[1] = positive(key, value)?,
            "k3" => k_deg[2] = positive(key, value)?,
            "theta0_1" => neutral_deg[0] = parse_number(key, value)?,
            "theta0_2" => neutral_deg[1] = parse_number(key, value)?,
            "theta0_3" => neutral_deg[2] = parse_number(key, value)?,
            "theta_max1" => limits_deg[0] = parse_number(key, value)?,
            "theta_max2" => limits_deg[1] = parse_number(key, value)?,
            "theta_max3" => limits_deg[2] = parse_number(key, value)?,
            "lf" => lf = positive(key, value)?,
            "xg" => ground.re = parse_number(key, value)?,
            "yg" => ground.im = parse_number(key, value)?,
            _ => unreachable!("canonical key {key} not handled"),
        }
    }

    let finger =
        FingerModel::from_table_units(lengths, bone_widths, k_deg, neutral_deg, limits_deg, lf, ground)?;

    let tendons = parsed.tendons();
    let both = tendons.len() == 2;
    let gamma = match (gamma, tendons.as_slice()) {
        (Some(_), [_]) => {
            return Err(TpsError::InvalidParameter {
                key: "gamma".into(),
                value: overrides
                    .iter()
                    .find(|(k, _)| canonical_key(k) == Some("gamma"))
                    .map(|(_, v)| v.clone())
                    .unwrap_or_default(),
                reason: "the tension ratio is meaningless for a single-tendon configuration".into(),
            })
        }
        (Some(g), _) => g,
        (None, [Tendon::Fdp]) => 0.0,
        (None, [Tendon::Fds]) => 1.0,
        (None, _) => 0.5,
    };

    let mut pulleys = vec![PulleySpec::ground()];
    let offsets = params.offsets.resolve(&finger, &parsed.point_phalanges())?;
    let mut point_no = 0usize;
    let mut place = |code: study::Location, phalange: usize| -> Result<f64> {
        let e = offsets[point_no];
        point_no += 1;
        study::position_of(code, phalange, e, &finger)
    };

    let mut fdp_points = vec![0usize];
    let mut fds_points = vec![0usize];

    for (g, group) in parsed.groups.iter().enumerate() {
        let phalange = g + 1;
        for (c, ch) in group.chars.iter().enumerate() {
            let x = place(ch.location, phalange)?;
            let role = parsed.role(g, c);
            let spec = match role {
                GroupKind::APulley => PulleySpec {
                    label: format!("A{}", 2 * phalange),
                    phalange,
                    kind: PulleyKind::Stiff,
                    x,
                    height: params.h_a,
                    width: params.w_a,
                    depth: params.depth,
                },
                GroupKind::CPulley => PulleySpec {
                    label: format!("C{}", 2 * phalange - 1),
                    phalange,
                    kind: if ch.flexible {
                        PulleyKind::Flexible
                    } else {
                        PulleyKind::Stiff
                    },
                    x,
                    height: params.h_c,
                    width: params.w_c,
                    depth: params.depth,
                },
                GroupKind::FdpTap | GroupKind::FdsTap => PulleySpec {
                    label: if role == GroupKind::FdpTap {
                        "FDP-TAP".into()
                    } else {
                        "FDS-TAP".into()
                    },
                    phalange,
                    kind: PulleyKind::Attachment,
                    x,
                    height: params.h_tap,
                    width: 0.0,
                    depth: params.depth,
                },
            };
            spec.validate(&finger)?;
            pulleys.push(spec);
        }
    }

    // co-located FDS attachment at the proximal tip corner of A4
    if both {
        let a4 = pulleys
            .iter()
            .find(|p| p.label == "A4")
            .cloned()
            .ok_or_else(|| TpsError::ConfigName {
                name: name.into(),
                reason: "two-tendon configuration needs an A4 pulley".into(),
            })?;
        let tap = PulleySpec {
            label: "FDS-TAP".into(),
            phalange: 2,
            kind: PulleyKind::Attachment,
            x: a4.x - 0.5 * a4.width,
            height: params.h_tap,
            width: 0.0,
            depth: params.depth,
        };
        tap.validate(&finger)?;
        pulleys.push(tap);
    }

    let mut order: Vec<usize> = (1..pulleys.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&pulleys[a], &pulleys[b]);
        (pa.phalange, pa.x)
            .partial_cmp(&(pb.phalange, pb.x))
            .expect("finite positions")
            .then((pa.kind == PulleyKind::Attachment).cmp(&(pb.kind == PulleyKind::Attachment)))
    });

    let fds_tap = pulleys.iter().position(|p| p.label == "FDS-TAP");
    let fdp_tap = pulleys.iter().position(|p| p.label == "FDP-TAP");
    for &i in &order {
        let p = &pulleys[i];
        if p.kind.bears_stress() {
            if fdp_tap.is_some() {
                fdp_points.push(i);
            }
            if let Some(t) = fds_tap {
                if (p.phalange, p.x) < (pulleys[t].phalange, pulleys[t].x) {
                    fds_points.push(i);
                } else if !both {
                    return Err(TpsError::RouteOrder(format!(
                        "{} lies distal to the FDS attachment",
                        p.label
                    )));
                }
            }
        }
    }
    let mut routes = Vec::new();
    if let Some(t) = fdp_tap {
        fdp_points.push(t);
        routes.push(TendonRoute {
            tendon: Tendon::Fdp,
            points: fdp_points,
        });
    }
    if let Some(t) = fds_tap {
        fds_points.push(t);
        routes.push(TendonRoute {
            tendon: Tendon::Fds,
            points: fds_points,
        });
    }

    let config = TpsConfiguration {
        name: parsed.to_string(),
        finger,
        pulleys,
        routes,
        gamma,
        params,
        sweep,
    };
    config.validate()?;
    Ok(config)
}

/// Parses the flat `key = value` configuration format. Blank lines and `#`
/// comments are ignored; the optional `config` key carries the configuration
/// name and is returned separately from the parameter overrides.
pub fn parse_config_file(text: &str) -> Result<(Option<String>, ParameterMap)> {
    let mut name = None;
    let mut map = ParameterMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| TpsError::InvalidParameter {
            key: format!("line {}", lineno + 1),
            value: raw.to_string(),
            reason: "expected `key = value`".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key == "config" || key == "name" {
            name = Some(value.to_string());
        } else {
            map.insert(key.to_string(), value.to_string());
        }
    }
    Ok((name, map))
}

/// Parses `key=value` pairs such as those passed via repeated `--set` flags.
pub fn parse_assignments<'a>(items: impl IntoIterator<Item = &'a str>) -> Result<ParameterMap> {
    let mut map = ParameterMap::new();
    for item in items {
        let (k, v) = item.split_once('=').ok_or_else(|| TpsError::InvalidParameter {
            key: item.to_string(),
            value: String::new(),
            reason: "expected key=value".into(),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Joint configuration together with the derived tendon quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumState {
    /// Joint angles, rad.
    pub theta: [f64; 3],
    pub locked: [bool; 3],
    pub t1: f64,
    pub t2: f64,
    /// Pulley angle per configuration pulley, rad (−π/2 unless flexible and active).
    pub beta: Vec<f64>,
    /// Activation flag per route point, per route.
    pub active: Vec<Vec<bool>>,
    /// Moment arms `d[j][t]`, mm (t = 0 FDP, 1 FDS).
    pub moment_arms: [[f64; 2]; 3],
}

impl EquilibriumState {
    pub fn sum_theta(&self) -> f64 {
        self.theta.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_overrides() -> ParameterMap {
        ParameterMap::new()
    }

    #[test]
    fn index_finger_defaults() {
        let f = FingerModel::index_finger();
        assert_eq!(f.lengths, [42.0, 27.0, 19.5]);
        assert_eq!(f.half_widths, [3.5; 3]);
        assert_eq!(f.flexure_length, 5.0);
        assert_eq!(f.ground, Point::new(-7.5, -5.0));
        let k = f.stiffness_per_degree();
        for (a, b) in k.iter().zip([0.95, 0.60, 0.60]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((f.full_range().to_degrees() - 270.0).abs() < 1e-9);
    }

    #[test]
    fn stiffness_unit_round_trip() {
        for k in [0.95, 0.6, 1e-3, 123.456] {
            let back = per_radian_to_per_degree(per_degree_to_per_radian(k));
            assert!(((back - k) / k).abs() < 1e-12);
        }
        assert!((per_degree_to_per_radian(1.0) - 57.295_779_513_082_32).abs() < 1e-12);
    }

    #[test]
    fn ccc_default_layout() {
        let c = build_configuration("C-C-C", &no_overrides()).unwrap();
        assert_eq!(c.routes.len(), 1);
        assert_eq!(c.gamma, 0.0);
        let route = c.route(Tendon::Fdp).unwrap();
        let labels: Vec<_> = route.points.iter().map(|&i| c.pulleys[i].label.as_str()).collect();
        assert_eq!(labels, ["G", "A2", "A4", "FDP-TAP"]);
        let xs: Vec<_> = route.points.iter().map(|&i| c.pulleys[i].x).collect();
        assert_eq!(xs, [0.0, 21.0, 13.5, 9.75]);
        for &i in &route.points[1..] {
            assert_eq!(c.pulleys[i].height, 0.5);
        }
        assert_eq!(c.pulleys[route.points[1]].width, 1.0);
        assert_eq!(c.pulleys[route.points[3]].kind, PulleyKind::Attachment);
    }

    #[test]
    fn gamma_on_single_tendon_is_rejected() {
        let mut o = no_overrides();
        o.insert("gamma".into(), "0.3".into());
        assert!(matches!(
            build_configuration("C-C-C", &o),
            Err(TpsError::InvalidParameter { .. })
        ));
        assert!(build_configuration("C-C=C", &o).is_ok());
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let mut o = no_overrides();
        o.insert("h_x".into(), "1".into());
        assert_eq!(
            build_configuration("C-C-C", &o),
            Err(TpsError::UnknownParameter("h_x".into()))
        );
    }

    #[test]
    fn combined_routes_share_pulleys() {
        let mut o = no_overrides();
        o.insert("h_c".into(), "2.0".into());
        o.insert("e".into(), "10e".into());
        let c = build_configuration("C~D-C~D=C", &o).unwrap();
        assert_eq!(c.gamma, 0.5);
        let labels = |t| -> Vec<String> {
            c.route(t)
                .unwrap()
                .points
                .iter()
                .map(|&i| c.pulleys[i].label.clone())
                .collect()
        };
        assert_eq!(labels(Tendon::Fdp), ["G", "A2", "C1", "A4", "C3", "FDP-TAP"]);
        assert_eq!(labels(Tendon::Fds), ["G", "A2", "C1", "FDS-TAP"]);
        let c1 = &c.pulleys[c.pulley_index("C1").unwrap()];
        assert_eq!(c1.kind, PulleyKind::Flexible);
        assert!((c1.x - (42.0 - 6.2)).abs() < 1e-12);
        let c3 = &c.pulleys[c.pulley_index("C3").unwrap()];
        assert!((c3.x - (27.0 - 4.7)).abs() < 1e-12);
        let a4 = &c.pulleys[c.pulley_index("A4").unwrap()];
        let tap = &c.pulleys[c.pulley_index("FDS-TAP").unwrap()];
        assert!((tap.x - (a4.x - a4.width / 2.0)).abs() < 1e-12);
        assert_eq!(tap.height, a4.height);
    }

    #[test]
    fn fds_only_route() {
        let c = build_configuration("C-C-", &no_overrides()).unwrap();
        assert_eq!(c.gamma, 1.0);
        let r = c.route(Tendon::Fds).unwrap();
        assert_eq!(r.points.len(), 3);
        assert!(c.route(Tendon::Fdp).is_none());
    }

    #[test]
    fn zero_width_pulley_builds() {
        let mut o = no_overrides();
        o.insert("w_a".into(), "0".into());
        let c = build_configuration("C-C-C", &o).unwrap();
        assert_eq!(c.pulleys[c.pulley_index("A2").unwrap()].width, 0.0);
    }

    #[test]
    fn pulley_outside_phalange() {
        let mut o = no_overrides();
        o.insert("l3".into(), "6".into());
        // offset 4 on a 6 mm phalange breaks 0 < e < l/2
        assert!(build_configuration("C-C-D", &o).is_err());
    }

    #[test]
    fn fds_route_on_distal_phalange_is_rejected() {
        let finger = FingerModel::index_finger();
        let pulleys = vec![
            PulleySpec::ground(),
            PulleySpec {
                label: "T".into(),
                phalange: 3,
                kind: PulleyKind::Attachment,
                x: 5.0,
                height: 0.5,
                width: 0.0,
                depth: 10.0,
            },
        ];
        let routes = vec![TendonRoute {
            tendon: Tendon::Fds,
            points: vec![0, 1],
        }];
        assert!(matches!(
            TpsConfiguration::new("x", finger, pulleys, routes, 1.0),
            Err(TpsError::FdsOnDistalPhalange(_))
        ));
    }

    #[test]
    fn config_file_format() {
        let text = "# study file\nconfig = C~D-C~D-C\nh_c = 2.0 # C height\n\ne=10e\n";
        let (name, map) = parse_config_file(text).unwrap();
        assert_eq!(name.as_deref(), Some("C~D-C~D-C"));
        assert_eq!(map.get("h_c").map(String::as_str), Some("2.0"));
        assert_eq!(map.get("e").map(String::as_str), Some("10e"));
        assert!(parse_config_file("nonsense line").is_err());
    }

    #[test]
    fn canonical_name_round_trips() {
        for name in ["C-C-C", "C~D-C~D=C", "CD-CD-C", "C-C-", "C~P-C~D-C"] {
            let c = build_configuration(name, &no_overrides()).unwrap();
            assert_eq!(c.name, name);
            let again = build_configuration(&c.name, &no_overrides()).unwrap();
            assert_eq!(again.name, c.name);
        }
    }
}
