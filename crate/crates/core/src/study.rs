//! Configuration-name grammar, parameter grids and the reproduction harness.
//!
//! Names follow the `C~D-C~D=C` convention: three hyphen-separated groups,
//! one per phalange. The first character of a group is an A-pulley (or a TAP
//! when the group ends the route), the optional second character a C-pulley.
//! A `~` before a character marks the pulley flexible. A final `=` separator
//! actuates both tendons; an empty last group means FDS only.

use std::fmt;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::equilibrium::{tension_sweep_with, SweepOptions, SweepTrace, Terminal};
use crate::error::{Result, TpsError};
use crate::metrics;
use crate::model::{
    build_configuration, FingerModel, ParameterMap, Tendon, TpsConfiguration, JOINT_NAMES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Location {
    Proximal,
    Central,
    Distal,
}

impl Location {
    pub fn code(self) -> char {
        match self {
            Location::Proximal => 'P',
            Location::Central => 'C',
            Location::Distal => 'D',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c.to_ascii_uppercase() {
            'P' => Some(Location::Proximal),
            'C' => Some(Location::Central),
            'D' => Some(Location::Distal),
            _ => None,
        }
    }

    /// Alphabetical code order, used for deterministic grid enumeration.
    pub const ALL: [Location; 3] = [Location::Central, Location::Distal, Location::Proximal];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocationChar {
    pub location: Location,
    pub flexible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Group {
    pub chars: Vec<LocationChar>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Separator {
    Single,
    Double,
}

/// What a character of the name stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    APulley,
    CPulley,
    FdpTap,
    FdsTap,
}

/// Parsed configuration name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigName {
    pub groups: [Group; 3],
    pub separators: [Separator; 2],
}

impl ConfigName {
    pub fn tendons(&self) -> Vec<Tendon> {
        if self.separators[1] == Separator::Double {
            vec![Tendon::Fdp, Tendon::Fds]
        } else if self.groups[2].chars.is_empty() {
            vec![Tendon::Fds]
        } else {
            vec![Tendon::Fdp]
        }
    }

    pub fn role(&self, group: usize, index: usize) -> GroupKind {
        if index == 1 {
            return GroupKind::CPulley;
        }
        match group {
            0 => GroupKind::APulley,
            1 if self.tendons() == [Tendon::Fds] => GroupKind::FdsTap,
            1 => GroupKind::APulley,
            _ => GroupKind::FdpTap,
        }
    }

    /// Phalange of every named point, in name order.
    pub fn point_phalanges(&self) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(g, group)| std::iter::repeat_n(g + 1, group.chars.len()))
            .collect()
    }
}

impl fmt::Display for ConfigName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (g, group) in self.groups.iter().enumerate() {
            if g > 0 {
                f.write_char(match self.separators[g - 1] {
                    Separator::Single => '-',
                    Separator::Double => '=',
                })?;
            }
            for c in &group.chars {
                if c.flexible {
                    f.write_char('~')?;
                }
                f.write_char(c.location.code())?;
            }
        }
        Ok(())
    }
}

/// Uppercases and strips whitespace; the canonical spelling of a name.
pub fn normalize_config_name(text: &str) -> String {
    text.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| c.to_ascii_uppercase())
        .collect()
}

pub fn parse_config_name(text: &str) -> Result<ConfigName> {
    let norm = normalize_config_name(text);
    let err = |reason: String| TpsError::ConfigName {
        name: text.to_string(),
        reason,
    };
    if norm.is_empty() {
        return Err(err("empty name".into()));
    }
    let mut groups: Vec<Group> = vec![Group::default()];
    let mut separators = Vec::new();
    let mut pending_tilde = false;
    for (pos, ch) in norm.chars().enumerate() {
        match ch {
            '-' | '=' => {
                if pending_tilde {
                    return Err(err(format!("dangling `~` before position {pos}")));
                }
                separators.push(if ch == '-' {
                    Separator::Single
                } else {
                    Separator::Double
                });
                groups.push(Group::default());
            }
            '~' => {
                if pending_tilde {
                    return Err(err(format!("repeated `~` at position {pos}")));
                }
                pending_tilde = true;
            }
            c => {
                let location = Location::from_code(c)
                    .ok_or_else(|| err(format!("illegal character `{c}` at position {pos}")))?;
                let group = groups.last_mut().expect("at least one group");
                if pending_tilde && group.chars.is_empty() {
                    return Err(err(format!(
                        "`~` on the first character of a group at position {pos}; A-pulleys and attachments are stiff"
                    )));
                }
                group.chars.push(LocationChar {
                    location,
                    flexible: pending_tilde,
                });
                pending_tilde = false;
            }
        }
    }
    if pending_tilde {
        return Err(err("dangling `~` at end of name".into()));
    }
    if groups.len() != 3 {
        return Err(err(format!("expected 3 groups, found {}", groups.len())));
    }
    if separators[0] != Separator::Single {
        return Err(err("the first separator must be `-`".into()));
    }
    for (g, group) in groups.iter().enumerate() {
        if group.chars.len() > 2 {
            return Err(err(format!("group {} has more than 2 characters", g + 1)));
        }
    }
    if groups[0].chars.is_empty() || groups[1].chars.is_empty() {
        return Err(err("the proximal and intermediate groups must not be empty".into()));
    }
    if groups[2].chars.len() > 1 {
        return Err(err("the distal group holds only the FDP attachment".into()));
    }
    if separators[1] == Separator::Double && groups[2].chars.is_empty() {
        return Err(err("`=` needs an FDP attachment in the distal group".into()));
    }
    Ok(ConfigName {
        groups: [groups[0].clone(), groups[1].clone(), groups[2].clone()],
        separators: [separators[0], separators[1]],
    })
}

/// Offsets used for the P and D locations.
#[derive(Debug, Clone, PartialEq)]
pub enum OffsetMode {
    /// The same offset on every phalange, mm.
    Uniform(f64),
    /// 10 % of the bone length outside the flexure: `(l_j − l_f)/10 + l_f/2`.
    TenPercent,
    /// One offset per named point, in name order, mm.
    PerPoint(Vec<f64>),
}

impl OffsetMode {
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        match t {
            "10e" | "e10" | "10%" => Ok(OffsetMode::TenPercent),
            "e0" => Ok(OffsetMode::Uniform(crate::model::DEFAULT_OFFSET)),
            _ => t
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v > 0.0)
                .map(OffsetMode::Uniform)
                .ok_or_else(|| TpsError::InvalidParameter {
                    key: "e".into(),
                    value: text.into(),
                    reason: "expected `10e`, `e0` or a positive offset in mm".into(),
                }),
        }
    }

    /// Short label used in study output.
    pub fn label(&self) -> String {
        match self {
            OffsetMode::Uniform(e) if *e == crate::model::DEFAULT_OFFSET => "e0".into(),
            OffsetMode::Uniform(e) => format!("{e}"),
            OffsetMode::TenPercent => "10e".into(),
            OffsetMode::PerPoint(v) => v
                .iter()
                .map(|e| format!("{e:.2}"))
                .collect::<Vec<_>>()
                .join("/"),
        }
    }

    pub fn ten_percent(finger: &FingerModel, phalange: usize) -> f64 {
        let lf = finger.flexure_length;
        (finger.lengths[phalange - 1] - lf) / 10.0 + lf / 2.0
    }

    /// Offset per named point.
    pub fn resolve(&self, finger: &FingerModel, phalanges: &[usize]) -> Result<Vec<f64>> {
        match self {
            OffsetMode::Uniform(e) => Ok(vec![*e; phalanges.len()]),
            OffsetMode::TenPercent => Ok(phalanges
                .iter()
                .map(|&j| Self::ten_percent(finger, j))
                .collect()),
            OffsetMode::PerPoint(v) if v.len() == phalanges.len() => Ok(v.clone()),
            OffsetMode::PerPoint(v) => Err(TpsError::InvalidParameter {
                key: "offsets".into(),
                value: format!("{v:?}"),
                reason: format!("expected {} offsets", phalanges.len()),
            }),
        }
    }
}

/// Position of a P/C/D location along phalange `phalange` (1..=3), mm.
pub fn position_of(code: Location, phalange: usize, offset: f64, finger: &FingerModel) -> Result<f64> {
    let l = finger.lengths[phalange - 1];
    if matches!(code, Location::Proximal | Location::Distal) && !(offset > 0.0 && offset < 0.5 * l) {
        return Err(TpsError::OffsetOutOfRange {
            offset,
            max: 0.5 * l,
            phalange,
        });
    }
    Ok(match code {
        Location::Proximal => offset,
        Location::Central => 0.5 * l,
        Location::Distal => l - offset,
    })
}

/// Cartesian product of one-pulley-per-phalange names for a tendon.
///
/// FDP names take axes (A2, A4, FDP-TAP); FDS names take (A2, FDS-TAP) and
/// ignore the third axis. Codes within an axis are enumerated alphabetically.
pub fn enumerate_grid(
    axes: [&[Location]; 3],
    tendon: Tendon,
    overrides: &ParameterMap,
) -> Result<Vec<TpsConfiguration>> {
    let sorted = |a: &[Location]| {
        let mut v = a.to_vec();
        v.sort_by_key(|l| l.code());
        v.dedup();
        v
    };
    let (a2, a4, tap) = (sorted(axes[0]), sorted(axes[1]), sorted(axes[2]));
    let mut names = Vec::new();
    for x in &a2 {
        for y in &a4 {
            match tendon {
                Tendon::Fdp => {
                    for z in &tap {
                        names.push(format!("{}-{}-{}", x.code(), y.code(), z.code()));
                    }
                }
                Tendon::Fds => names.push(format!("{}-{}-", x.code(), y.code())),
            }
        }
    }
    names
        .iter()
        .map(|n| build_configuration(n, overrides))
        .collect()
}

pub fn default_grid(tendon: Tendon) -> Result<Vec<TpsConfiguration>> {
    let all: &[Location] = &Location::ALL;
    enumerate_grid([all, all, all], tendon, &ParameterMap::new())
}

/// One configuration of a study with its reporting options.
#[derive(Debug, Clone)]
pub struct StudyCase {
    pub config: TpsConfiguration,
    /// Joints left out of the critical bowstringing value.
    pub exclude_joints: [bool; 3],
}

impl StudyCase {
    pub fn new(config: TpsConfiguration) -> Self {
        Self {
            config,
            exclude_joints: [false; 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudySettings {
    /// Per-tendon tensions at which ROF is reported, N.
    pub low_tension: f64,
    pub high_tension: f64,
    /// Per-tendon reference tension for two-tendon configurations, N.
    pub combined_tension: f64,
    pub steps: usize,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            low_tension: 5.0,
            high_tension: 8.0,
            combined_tension: 6.4,
            steps: crate::model::DEFAULT_STEPS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    Failed,
}

/// One line of a study table.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub name: String,
    pub rof_low_deg: f64,
    /// ROF at the high tension, or at the combined tension for two-tendon rows.
    pub rof_high_deg: f64,
    pub bw_mm: f64,
    pub bw_joint: String,
    pub ps_mpa: f64,
    pub ps_pulley: String,
    pub e_mode: String,
    pub h_a: f64,
    pub h_c: f64,
    pub w_a: f64,
    pub w_c: f64,
    pub combined: bool,
    pub status: RowStatus,
    pub message: Option<String>,
}

pub const STUDY_CSV_HEADER: &str =
    "name,rof5_deg,rof8_deg,bw_mm,bw_joint,ps_mpa,ps_pulley,e_mode,h_a,h_c,w_a,w_c,status";

impl StudyRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.1},{:.1},{:.2},{},{:.2},{},{},{:.2},{:.2},{:.2},{:.2},{}",
            self.name,
            self.rof_low_deg,
            self.rof_high_deg,
            self.bw_mm,
            self.bw_joint,
            self.ps_mpa,
            self.ps_pulley,
            self.e_mode,
            self.h_a,
            self.h_c,
            self.w_a,
            self.w_c,
            match self.status {
                RowStatus::Ok => "ok",
                RowStatus::Failed => "failed",
            }
        )
    }
}

pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from(STUDY_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Sweep used for a study row: total tension up to the reference value with
/// the low tension inserted as a checkpoint.
pub fn study_sweep(case: &StudyCase, settings: &StudySettings) -> SweepTrace {
    let cfg = &case.config;
    let combined = cfg.routes.len() == 2;
    let per_tendon_high = if combined {
        settings.combined_tension
    } else {
        settings.high_tension
    };
    let t_high = cfg.total_for_tendon_tension(per_tendon_high);
    let t_low = cfg.total_for_tendon_tension(settings.low_tension);
    let options = SweepOptions {
        exclude_joints: case.exclude_joints,
        checkpoints: vec![t_low],
        ..SweepOptions::uniform(t_high, settings.steps)
    };
    tension_sweep_with(cfg, &options)
}

fn row_from_trace(case: &StudyCase, settings: &StudySettings, trace: &SweepTrace) -> StudyRow {
    let cfg = &case.config;
    let combined = cfg.routes.len() == 2;
    let per_tendon_high = if combined {
        settings.combined_tension
    } else {
        settings.high_tension
    };
    let t_high = cfg.total_for_tendon_tension(per_tendon_high);
    let t_low = cfg.total_for_tendon_tension(settings.low_tension);
    let mut row = StudyRow {
        name: cfg.name.clone(),
        rof_low_deg: f64::NAN,
        rof_high_deg: f64::NAN,
        bw_mm: f64::NAN,
        bw_joint: String::new(),
        ps_mpa: f64::NAN,
        ps_pulley: String::new(),
        e_mode: cfg.params.offsets.label(),
        h_a: cfg.params.h_a,
        h_c: cfg.params.h_c,
        w_a: cfg.params.w_a,
        w_c: cfg.params.w_c,
        combined,
        status: RowStatus::Ok,
        message: None,
    };
    let reached = |t: f64| {
        trace.terminal == Terminal::AllLocked || trace.steps.last().is_some_and(|s| s.t_s >= t - 1e-9)
    };
    if !reached(t_high) {
        row.status = RowStatus::Failed;
        row.message = trace.error.as_ref().map(|e| e.to_string());
        return row;
    }
    row.rof_low_deg = metrics::range_of_flexion(&trace.theta_at(t_low));
    row.rof_high_deg = metrics::range_of_flexion(&trace.theta_at(t_high));
    match trace.metrics_at(cfg, t_high, &case.exclude_joints) {
        Ok(m) => {
            if let Some(c) = m.bowstring.critical {
                row.bw_mm = c.value;
                row.bw_joint = JOINT_NAMES[c.joint].to_string();
            }
            match m.critical_stress() {
                Ok(Some(s)) => {
                    row.ps_mpa = s.sigma_net;
                    row.ps_pulley = s.label.clone();
                }
                Ok(None) => {}
                Err(e) => {
                    row.status = RowStatus::Failed;
                    row.message = Some(e.to_string());
                }
            }
        }
        Err(e) => {
            row.status = RowStatus::Failed;
            row.message = Some(e.to_string());
        }
    }
    row
}

/// Evaluates one study case.
pub fn run_case(case: &StudyCase, settings: &StudySettings) -> StudyRow {
    let trace = study_sweep(case, settings);
    row_from_trace(case, settings, &trace)
}

/// Runs every case in parallel and returns rows ordered by descending ROF at
/// the high tension, ties broken by name and then by input order.
pub fn run_study(cases: &[StudyCase], settings: &StudySettings) -> Vec<StudyRow> {
    let mut rows: Vec<(usize, StudyRow)> = cases
        .par_iter()
        .enumerate()
        .map(|(i, c)| (i, run_case(c, settings)))
        .collect();
    rows.sort_by(|(ia, a), (ib, b)| {
        let key = |r: &StudyRow| if r.rof_high_deg.is_nan() { f64::NEG_INFINITY } else { r.rof_high_deg };
        key(b)
            .partial_cmp(&key(a))
            .expect("keys are not NaN")
            .then_with(|| a.name.cmp(&b.name))
            .then(ia.cmp(ib))
    });
    rows.into_iter().map(|(_, r)| r).collect()
}

/// Reference row of the results table, used as a reproduction target.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRow {
    pub name: &'static str,
    pub rof5: f64,
    pub rof8: f64,
    pub bw: f64,
    pub bw_joint: &'static str,
    pub ps: f64,
    pub ps_pulley: &'static str,
    /// Overrides as `key=value` pairs.
    pub overrides: &'static [(&'static str, &'static str)],
    pub exclude_mcp: bool,
}

impl ReferenceRow {
    pub fn combined(&self) -> bool {
        self.name.contains('=')
    }

    pub fn fds_only(&self) -> bool {
        self.name.ends_with('-')
    }

    pub fn case(&self) -> Result<StudyCase> {
        let overrides: ParameterMap = self
            .overrides
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let config = build_configuration(self.name, &overrides)?;
        Ok(StudyCase {
            config,
            exclude_joints: [self.exclude_mcp, false, false],
        })
    }
}

macro_rules! row {
    ($name:expr, $r5:expr, $r8:expr, $bw:expr, $bj:expr, $ps:expr, $pp:expr, [$($k:expr => $v:expr),*], $ex:expr) => {
        ReferenceRow {
            name: $name,
            rof5: $r5,
            rof8: $r8,
            bw: $bw,
            bw_joint: $bj,
            ps: $ps,
            ps_pulley: $pp,
            overrides: &[$(($k, $v)),*],
            exclude_mcp: $ex,
        }
    };
}

/// Reference results, in their original order. Rows whose curves
/// appear in figures that leave the MCP joint out of the bowstringing value
/// carry `exclude_mcp`.
pub const TABLE2: &[ReferenceRow] = &[
    row!("C~D-C~D=C", 251.0, 270.0, 9.0, "MCP", 2.8, "C1", ["e" => "10e", "h_c" => "2.0", "w_a" => "2.0"], false),
    row!("C~D-C~D=D", 252.0, 270.0, 9.0, "MCP", 3.0, "C1", ["e" => "10e", "h_c" => "2.0", "w_a" => "2.0"], false),
    row!("C~D-C~D-C", 176.0, 256.0, 8.9, "PIP", 1.8, "C1", ["e" => "10e", "h_c" => "2.0"], true),
    row!("C~D-C~D-C", 176.0, 256.0, 9.0, "MCP", 2.2, "C1", ["e" => "10e", "h_c" => "2.0", "w_a" => "2.0"], false),
    row!("C~D-C~D-D", 176.0, 256.0, 9.0, "MCP", 2.2, "C1", ["e" => "10e", "h_c" => "2.0", "w_a" => "2.0"], false),
    row!("C~D-C~D-C", 200.0, 256.0, 9.8, "PIP", 1.8, "C1", ["h_c" => "4.5"], true),
    row!("C-C-C", 200.0, 256.0, 10.3, "PIP", 0.2, "A4", ["w_a" => "8.0"], false),
    row!("C-C-C", 223.0, 256.0, 13.1, "PIP", 0.9, "A4", ["w_a" => "2.0"], false),
    row!("C-C-D", 223.0, 256.0, 13.6, "PIP", 2.2, "A4", [], false),
    row!("C-C-C", 223.0, 256.0, 13.6, "PIP", 2.4, "A4", [], false),
    row!("C-C-C", 223.0, 256.0, 13.8, "PIP", 7.5, "A4", ["w_a" => "0.5"], false),
    row!("C-C-C", 224.0, 255.0, 14.1, "PIP", 7.3, "A4", ["h_a" => "2.0"], true),
    row!("C-C-C", 226.0, 254.0, 14.8, "PIP", 13.7, "A4", ["h_a" => "3.5"], true),
    row!("C~D-C~D-C", 177.0, 252.0, 8.9, "PIP", 2.1, "C1", ["e" => "10e", "h_a" => "2.0", "h_c" => "2.0"], true),
    row!("C~P-C~D-C", 200.0, 250.0, 13.6, "PIP", 2.4, "A4", ["e" => "10e", "h_c" => "2.0"], false),
    row!("C~D-C~D-C", 148.0, 247.0, 9.0, "MCP", 1.4, "C1", ["e" => "10e", "w_a" => "8.0"], false),
    row!("CD-CD-C", 166.0, 246.0, 7.9, "PIP", 8.1, "C1", ["e" => "10e", "h_c" => "2.0"], true),
    row!("C~D-C~D-C", 176.0, 246.0, 8.9, "PIP", 2.2, "C1", ["e" => "10e", "h_a" => "3.5", "h_c" => "2.0"], true),
    row!("C-D-P", 184.0, 246.0, 18.9, "PIP", 1.8, "A2", [], false),
    row!("C~D-C~D-C", 151.0, 245.0, 9.0, "MCP", 1.5, "C1", ["e" => "10e", "w_a" => "2.0"], false),
    row!("C~D-C~D-C", 151.0, 245.0, 9.0, "MCP", 1.6, "C1", ["e" => "10e", "w_a" => "0.5"], false),
    row!("C-D-C", 187.0, 243.0, 18.9, "PIP", 1.8, "A2", [], false),
    row!("C-C-P", 187.0, 242.0, 13.6, "PIP", 2.4, "A4", [], false),
    row!("C-D-D", 187.0, 242.0, 18.9, "PIP", 1.8, "A4", [], false),
    row!("C~D-C-", 114.0, 176.0, 9.0, "MCP", 2.2, "C1", ["e" => "10e", "h_c" => "2.0", "w_a" => "2.0"], false),
    row!("C-C-", 143.0, 176.0, 13.6, "PIP", 0.8, "A2", [], false),
    row!("C-D-", 143.0, 176.0, 18.9, "PIP", 1.8, "A2", [], false),
    row!("C~D-D-", 114.0, 174.0, 9.0, "MCP", 2.8, "C1", ["e" => "10e", "h_c" => "2.0", "w_a" => "2.0"], false),
];

/// Which reference rows to select.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowFilter {
    All,
    Fdp,
    Fds,
    Combined,
}

impl RowFilter {
    pub fn accepts(self, row: &ReferenceRow) -> bool {
        match self {
            RowFilter::All => true,
            RowFilter::Fdp => !row.combined() && !row.fds_only(),
            RowFilter::Fds => row.fds_only(),
            RowFilter::Combined => row.combined(),
        }
    }
}

/// Result of regenerating one reference row.
#[derive(Debug, Clone)]
pub struct ReproducedRow {
    pub reference: ReferenceRow,
    pub row: StudyRow,
}

/// Regenerates the selected reference rows, in reference order.
pub fn reproduce_table2(filter: RowFilter, settings: &StudySettings) -> Result<Vec<ReproducedRow>> {
    let refs: Vec<&ReferenceRow> = TABLE2.iter().filter(|r| filter.accepts(r)).collect();
    let cases = refs.iter().map(|r| r.case()).collect::<Result<Vec<_>>>()?;
    let rows: Vec<StudyRow> = cases.par_iter().map(|c| run_case(c, settings)).collect();
    Ok(refs
        .into_iter()
        .zip(rows)
        .map(|(r, row)| ReproducedRow {
            reference: r.clone(),
            row,
        })
        .collect())
}

/// Sorts reproduced rows like the reference table: descending ROF at the
/// reference tension, then by name.
pub fn sort_rows(rows: &mut [StudyRow]) {
    rows.sort_by(|a, b| {
        b.rof_high_deg
            .partial_cmp(&a.rof_high_deg)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.name.cmp(&b.name))
    });
}

/// Study rows for the selected reference configurations, ordered by
/// descending ROF at the reference tension.
pub fn table2_rows(filter: RowFilter, settings: &StudySettings) -> Result<Vec<StudyRow>> {
    let mut rows: Vec<StudyRow> = reproduce_table2(filter, settings)?.into_iter().map(|r| r.row).collect();
    sort_rows(&mut rows);
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: &str =
    "T_s,T1,T2,theta1_deg,theta2_deg,theta3_deg,sum_deg,bw_mm,bw_joint,ps_mpa,ps_pulley,locked";

/// One line per accepted sweep step. Tensions to 1e-6 N, angles to 1e-4 deg,
/// lengths to 1e-4 mm and stresses to 1e-4 MPa. Locked joints are joined
/// with `|`; undefined metrics are written as `nan`.
pub fn sweep_csv(trace: &SweepTrace) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for s in &trace.steps {
        let th = s.state.theta.map(f64::to_degrees);
        let (bw, bw_joint) = match s.metrics.bowstring.critical {
            Some(c) => (format!("{:.4}", c.value), JOINT_NAMES[c.joint]),
            None => ("nan".into(), ""),
        };
        let (ps, ps_pulley) = match s.metrics.critical_stress() {
            Ok(Some(c)) => (format!("{:.4}", c.sigma_net), c.label.clone()),
            _ => ("nan".into(), String::new()),
        };
        let locked: Vec<&str> = (0..3).filter(|&j| s.state.locked[j]).map(|j| JOINT_NAMES[j]).collect();
        let _ = writeln!(
            out,
            "{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},{:.4},{bw},{bw_joint},{ps},{ps_pulley},{}",
            s.t_s,
            s.state.t1,
            s.state.t2,
            th[0],
            th[1],
            th[2],
            th[0] + th[1] + th[2],
            locked.join("|")
        );
    }
    out
}

/// One curve of a figure preset.
#[derive(Debug, Clone)]
pub struct FigureCurve {
    pub label: String,
    pub case: StudyCase,
    /// Overrides applied on top of the defaults, for the legend.
    pub overrides: Vec<(String, String)>,
}

/// A family of tension sweeps regenerating one figure of curves.
#[derive(Debug, Clone)]
pub struct FigurePreset {
    pub id: &'static str,
    pub description: &'static str,
    /// Quantity plotted against tendon tension.
    pub y_axis: &'static str,
    /// Per-tendon tension at the end of each sweep, N.
    pub tendon_tension: f64,
    pub curves: Vec<FigureCurve>,
}

pub const FIGURE_PRESETS: [&str; 10] = [
    "fdp-tension",
    "fdp-bw",
    "fdp-ps",
    "c-height",
    "c-location",
    "a-width",
    "a-height",
    "fds-all",
    "combined",
    "literature",
];

/// Fractions of the bone length outside the flexure used by the reconstruction
/// case of the literature preset, one per named point.
pub const METAPHYSIS_FRACTIONS: [f64; 5] = [0.21, 0.31, 0.25, 0.21, 0.27];

fn curve(name: &str, overrides: &[(&str, String)], exclude_mcp: bool) -> Result<FigureCurve> {
    let map: ParameterMap = overrides.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    let config = build_configuration(name, &map)?;
    let mut label = name.to_string();
    for (k, v) in overrides {
        if *k != "offsets" {
            let _ = write!(label, " {k}={v}");
        }
    }
    Ok(FigureCurve {
        label,
        case: StudyCase {
            config,
            exclude_joints: [exclude_mcp, false, false],
        },
        overrides: overrides.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
    })
}

fn kv(pairs: &[(&'static str, &str)]) -> Vec<(&'static str, String)> {
    pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
}

fn grid_curves(tendon: Tendon) -> Result<Vec<FigureCurve>> {
    default_grid(tendon)?
        .into_iter()
        .map(|c| {
            Ok(FigureCurve {
                label: c.name.clone(),
                case: StudyCase::new(c),
                overrides: Vec::new(),
            })
        })
        .collect()
}

/// Offsets of the reconstruction case: `x_k (l_j − l_f) + l_f/2` with
/// `j = ⌈k/2⌉`.
pub fn metaphysis_offsets(finger: &FingerModel) -> Vec<f64> {
    METAPHYSIS_FRACTIONS
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let j = k / 2;
            x * (finger.lengths[j] - finger.flexure_length) + 0.5 * finger.flexure_length
        })
        .collect()
}

/// Curves of a named figure preset.
pub fn figure_preset(id: &str) -> Result<FigurePreset> {
    let heights = ["0.5", "2.0", "4.5"];
    let (description, y_axis, curves): (&'static str, &'static str, Vec<FigureCurve>) = match id {
        "fdp-tension" | "fdp-bw" | "fdp-ps" => (
            "one pulley per phalange, FDP tendon, all 27 location triples",
            match id {
                "fdp-tension" => "sum_deg",
                "fdp-bw" => "bw_mm",
                _ => "ps_mpa",
            },
            grid_curves(Tendon::Fdp)?,
        ),
        "c-height" => {
            let mut v = Vec::new();
            for name in ["CD-CD-C", "C~D-C~D-C"] {
                for h in heights {
                    v.push(curve(name, &kv(&[("h_c", h)]), true)?);
                }
            }
            ("stiff and flexible C-pulleys at three heights", "sum_deg", v)
        }
        "c-location" => {
            let mut v = Vec::new();
            for name in ["CD-CD-C", "C~D-C~D-C"] {
                for e in ["e0", "10e"] {
                    v.push(curve(name, &kv(&[("e", e), ("h_c", "2.0")]), true)?);
                }
            }
            ("C-pulley offsets from the joints", "sum_deg", v)
        }
        "a-width" => {
            let mut v = Vec::new();
            for w in ["0.5", "2.0", "8.0"] {
                v.push(curve("C-C-C", &kv(&[("w_a", w)]), false)?);
            }
            for w in ["0.5", "2.0", "8.0"] {
                v.push(curve("C~D-C~D-C", &kv(&[("e", "10e"), ("w_a", w)]), false)?);
            }
            ("A-pulley widths", "ps_mpa", v)
        }
        "a-height" => {
            let mut v = Vec::new();
            for h in heights.iter().map(|h| if *h == "4.5" { "3.5" } else { h }) {
                v.push(curve("C-C-C", &kv(&[("h_a", h)]), true)?);
            }
            for h in heights.iter().map(|h| if *h == "4.5" { "3.5" } else { h }) {
                v.push(curve("C~D-C~D-C", &kv(&[("e", "10e"), ("h_c", "2.0"), ("h_a", h)]), true)?);
            }
            ("A-pulley heights", "ps_mpa", v)
        }
        "fds-all" => (
            "one pulley per phalange, FDS tendon, all 9 location pairs",
            "sum_deg",
            grid_curves(Tendon::Fds)?,
        ),
        "combined" => {
            let mut v = Vec::new();
            let params = kv(&[("e", "10e"), ("h_c", "2.0"), ("w_a", "2.0")]);
            for x in ["C", "D"] {
                for name in [format!("C~D-C~D-{x}"), format!("C~D-{x}-"), format!("C~D-C~D={x}")] {
                    v.push(curve(&name, &params, false)?);
                }
            }
            ("FDP only, FDS only and both tendons at equal tension", "sum_deg", v)
        }
        "literature" => {
            let finger = FingerModel::index_finger();
            let offsets = metaphysis_offsets(&finger)
                .iter()
                .map(|e| format!("{e:.4}"))
                .collect::<Vec<_>>()
                .join(",");
            let v = vec![
                curve("C-C-C", &kv(&[("w_a", "4.0")]), false)?,
                curve("D-D-C", &kv(&[("w_a", "2.0")]), false)?,
                curve("PD-PD-C", &kv(&[("w_a", "2.0"), ("e", "e0")]), false)?,
                curve(
                    "PD-PD-P",
                    &[("w_a", "2.0".to_string()), ("w_c", "2.0".to_string()), ("offsets", offsets)],
                    false,
                )?,
                curve("C~D-C~D-C", &kv(&[("e", "10e"), ("w_a", "2.0"), ("h_c", "2.0")]), false)?,
            ];
            ("configurations proposed in earlier designs, cases i to v", "sum_deg", v)
        }
        _ => {
            return Err(TpsError::InvalidParameter {
                key: "preset".into(),
                value: id.into(),
                reason: format!("expected one of {}", FIGURE_PRESETS.join(", ")),
            })
        }
    };
    let id = FIGURE_PRESETS.iter().find(|p| **p == id).expect("listed preset");
    Ok(FigurePreset {
        id,
        description,
        y_axis,
        tendon_tension: crate::model::DEFAULT_MAX_TENSION,
        curves,
    })
}

/// Sweep of one figure curve up to the preset's per-tendon tension.
pub fn figure_sweep(preset: &FigurePreset, curve: &FigureCurve, steps: usize) -> SweepTrace {
    let cfg = &curve.case.config;
    let options = SweepOptions {
        exclude_joints: curve.case.exclude_joints,
        ..SweepOptions::uniform(cfg.total_for_tendon_tension(preset.tendon_tension), steps)
    };
    tension_sweep_with(cfg, &options)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_cdp() {
        let n = parse_config_name("C-D-P").unwrap();
        assert_eq!(n.tendons(), vec![Tendon::Fdp]);
        assert_eq!(n.groups[0].chars[0].location, Location::Central);
        assert_eq!(n.groups[1].chars[0].location, Location::Distal);
        assert_eq!(n.groups[2].chars[0].location, Location::Proximal);
        assert_eq!(n.role(1, 0), GroupKind::APulley);
        assert_eq!(n.role(2, 0), GroupKind::FdpTap);
    }

    #[test]
    fn parse_fds_only() {
        let n = parse_config_name("C-C-").unwrap();
        assert_eq!(n.tendons(), vec![Tendon::Fds]);
        assert_eq!(n.role(1, 0), GroupKind::FdsTap);
        assert!(n.groups[2].chars.is_empty());
    }

    #[test]
    fn parse_combined_with_flexible() {
        let n = parse_config_name("C~D-C~D=C").unwrap();
        assert_eq!(n.tendons(), vec![Tendon::Fdp, Tendon::Fds]);
        assert!(n.groups[0].chars[1].flexible);
        assert!(!n.groups[0].chars[0].flexible);
        assert_eq!(n.role(0, 1), GroupKind::CPulley);
        assert_eq!(n.to_string(), "C~D-C~D=C");
    }

    #[test]
    fn grammar_errors() {
        for bad in ["", "X-C-C", "CCC-C-C", "~C-C-C", "C-C=", "C-C", "C=C-C", "C-C-CD", "C~-C-C", "C-C-C-C"] {
            assert!(parse_config_name(bad).is_err(), "{bad} should fail");
        }
    }

    #[test]
    fn format_parse_idempotent_on_table() {
        for r in TABLE2 {
            let once = parse_config_name(r.name).unwrap().to_string();
            let twice = parse_config_name(&once).unwrap().to_string();
            assert_eq!(once, normalize_config_name(r.name));
            assert_eq!(once, twice);
        }
        assert_eq!(parse_config_name(" c~d - c~d = c ").unwrap().to_string(), "C~D-C~D=C");
    }

    #[test]
    fn positions() {
        let f = FingerModel::index_finger();
        assert_eq!(position_of(Location::Proximal, 1, 4.0, &f).unwrap(), 4.0);
        assert_eq!(position_of(Location::Central, 3, 4.0, &f).unwrap(), 9.75);
        assert_eq!(position_of(Location::Distal, 2, 4.0, &f).unwrap(), 23.0);
        assert!((OffsetMode::ten_percent(&f, 1) - 6.2).abs() < 1e-12);
        assert!((OffsetMode::ten_percent(&f, 2) - 4.7).abs() < 1e-12);
        assert!((OffsetMode::ten_percent(&f, 3) - 3.95).abs() < 1e-12);
        assert!(position_of(Location::Distal, 3, 10.0, &f).is_err());
        assert!(position_of(Location::Proximal, 1, 0.0, &f).is_err());
    }

    #[test]
    fn grid_sizes_and_order() {
        let fdp = default_grid(Tendon::Fdp).unwrap();
        assert_eq!(fdp.len(), 27);
        assert_eq!(fdp[0].name, "C-C-C");
        assert_eq!(fdp[1].name, "C-C-D");
        assert_eq!(fdp[26].name, "P-P-P");
        let fds = default_grid(Tendon::Fds).unwrap();
        assert_eq!(fds.len(), 9);
        assert!(fds.iter().all(|c| c.gamma == 1.0));
        let one: &[Location] = &[Location::Central];
        assert_eq!(
            enumerate_grid([one, one, one], Tendon::Fdp, &ParameterMap::new())
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn every_table_row_builds() {
        for r in TABLE2 {
            r.case().unwrap_or_else(|e| panic!("{}: {e}", r.name));
        }
        assert_eq!(TABLE2.len(), 28);
    }

    #[test]
    fn empty_study() {
        assert!(run_study(&[], &StudySettings::default()).is_empty());
    }

    #[test]
    fn every_figure_preset_builds() {
        for id in FIGURE_PRESETS {
            let p = figure_preset(id).unwrap();
            assert!(!p.curves.is_empty(), "{id}");
        }
        assert!(figure_preset("nope").is_err());
        assert_eq!(figure_preset("c-height").unwrap().curves.len(), 6);
        assert_eq!(figure_preset("fdp-ps").unwrap().curves.len(), 27);
        assert_eq!(figure_preset("fds-all").unwrap().curves.len(), 9);
        let widths: Vec<f64> = figure_preset("a-width").unwrap().curves[..3]
            .iter()
            .map(|c| c.case.config.params.w_a)
            .collect();
        assert_eq!(widths, vec![0.5, 2.0, 8.0]);
    }

    #[test]
    fn reconstruction_offsets_follow_metaphysis_fractions() {
        let finger = FingerModel::index_finger();
        let e = metaphysis_offsets(&finger);
        // first point on the proximal phalange: 0.21 * (42 - 5) + 2.5
        assert!((e[0] - 10.27).abs() < 1e-12);
        assert!((e[4] - (0.27 * 14.5 + 2.5)).abs() < 1e-12);
        let lit = figure_preset("literature").unwrap();
        let case4 = &lit.curves[3].case.config;
        let a2 = case4.pulley_index("A2").unwrap();
        assert!((case4.pulleys[a2].x - 10.27).abs() < 1e-3);
    }
}
