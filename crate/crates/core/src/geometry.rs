//! Planar kinematics of the finger and tendon paths.
//!
//! Flexion is positive and rotates each phalange clockwise, toward the
//! palmar side (−y). Pulleys hang palmar of the bone; a stiff pulley points
//! straight down its phalange normal (β = −π/2), a flexible one tilts.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{Result, TpsError};
use crate::model::{FingerModel, Point, PulleyKind, PulleySpec, Tendon, TpsConfiguration};

/// Activation flag per route point, per route.
pub type ActiveSets = Vec<Vec<bool>>;

/// Pulley angle of a stiff pulley, rad.
pub const STIFF_BETA: f64 = -FRAC_PI_2;

/// Search interval margin for flexible pulley angles, rad.
pub const BETA_MARGIN: f64 = 1e-3;

/// Upper bound on activation passes before a cycle is declared.
pub const MAX_ACTIVATION_PASSES: usize = 50;

/// `a × b`, the z component of the planar cross product.
pub fn cross(a: Point, b: Point) -> f64 {
    a.re * b.im - a.im * b.re
}

pub fn dot(a: Point, b: Point) -> f64 {
    a.re * b.re + a.im * b.im
}

/// Rotation of phalange `phalange` (0 is the palm) for joint angles `theta`.
pub fn phalange_rotation(theta: &[f64; 3], phalange: usize) -> Complex64 {
    let c: f64 = theta[..phalange].iter().sum();
    Complex64::from_polar(1.0, -c)
}

/// Positions of the MCP, PIP and DIP joints.
pub fn joint_positions(finger: &FingerModel, theta: &[f64; 3]) -> [Point; 3] {
    let z1 = Point::new(0.0, 0.0);
    let z2 = z1 + finger.lengths[0] * phalange_rotation(theta, 1);
    let z3 = z2 + finger.lengths[1] * phalange_rotation(theta, 2);
    [z1, z2, z3]
}

/// Fingertip position.
pub fn tip_position(finger: &FingerModel, theta: &[f64; 3]) -> Point {
    let z = joint_positions(finger, theta);
    z[2] + finger.lengths[2] * phalange_rotation(theta, 3)
}

/// Placed pulley: base `u`, tip `r`, proximal corner `q`, distal corner `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulleyFrame {
    pub u: Point,
    pub r: Point,
    pub q: Point,
    pub s: Point,
    /// Unit vector from base to tip.
    pub axis: Point,
}

impl PulleyFrame {
    fn fixed(p: Point) -> Self {
        Self {
            u: p,
            r: p,
            q: p,
            s: p,
            axis: Point::new(0.0, -1.0),
        }
    }
}

/// Places a pulley given the joint positions and its angle `beta`.
pub fn pulley_frame(
    finger: &FingerModel,
    joints: &[Point; 3],
    theta: &[f64; 3],
    pulley: &PulleySpec,
    beta: f64,
) -> PulleyFrame {
    if pulley.kind == PulleyKind::Ground {
        return PulleyFrame::fixed(finger.ground);
    }
    let j = pulley.phalange;
    let rot = phalange_rotation(theta, j);
    let b = finger.half_widths[j - 1];
    let origin = joints[j - 1];
    let u = origin + Point::new(pulley.x, -b) * rot;
    let axis = Complex64::from_polar(1.0, beta) * rot;
    let r = u + pulley.height * axis;
    if pulley.kind == PulleyKind::Attachment {
        return PulleyFrame {
            u,
            r,
            q: r,
            s: r,
            axis,
        };
    }
    let dir = Complex64::i() * axis;
    let half = 0.5 * pulley.width;
    PulleyFrame {
        u,
        r,
        q: r - half * dir,
        s: r + half * dir,
        axis,
    }
}

/// How the closest point of a segment was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosestCase {
    /// The perpendicular foot lies strictly inside the segment.
    Interior,
    /// Clamped to the proximal end `s`.
    Start,
    /// Clamped to the distal end `q`.
    End,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentDistance {
    pub distance: f64,
    /// Parameter of the unclamped foot `(1 − α)s + αq`.
    pub alpha: f64,
    pub closest: Point,
    pub case: ClosestCase,
}

/// Foot of the perpendicular from `z` onto the line through `s` and `q`.
pub fn foot_of_perpendicular(z: Point, s: Point, q: Point) -> Result<(Point, f64)> {
    let d = q - s;
    let len2 = d.norm_sqr();
    if !(len2 > 0.0) {
        return Err(TpsError::DegenerateGeometry(format!(
            "segment endpoints coincide at ({}, {})",
            s.re, s.im
        )));
    }
    let alpha = dot(z - s, d) / len2;
    Ok((s + alpha * d, alpha))
}

/// Distance from `z` to the segment from `s` to `q`, clamped at both ends.
pub fn point_segment_distance(z: Point, s: Point, q: Point) -> Result<SegmentDistance> {
    let (foot, alpha) = foot_of_perpendicular(z, s, q)?;
    let (closest, case) = if alpha <= 0.0 {
        (s, ClosestCase::Start)
    } else if alpha >= 1.0 {
        (q, ClosestCase::End)
    } else {
        (foot, ClosestCase::Interior)
    };
    Ok(SegmentDistance {
        distance: (z - closest).norm(),
        alpha,
        closest,
        case,
    })
}

/// Distance from `z` to a segment that may have collapsed to a point.
fn distance_to_chord(z: Point, a: Point, b: Point) -> f64 {
    point_segment_distance(z, a, b)
        .map(|d| d.distance)
        .unwrap_or_else(|_| (z - a).norm())
}

/// Wrap angles at a pulley for a tendon arriving from `prev` and leaving
/// toward `next`: φ1 between the incoming tendon and the pulley axis, φ2
/// between the axis and the outgoing tendon.
pub fn flexion_angles(frame: &PulleyFrame, prev: Point, next: Point) -> (f64, f64) {
    let phi1 = (frame.axis / (prev - frame.q)).arg();
    let phi2 = ((next - frame.s) / frame.axis).arg();
    (phi1, phi2)
}

/// Derivative of the wrapped tendon length with respect to the pulley angle,
/// per unit tension. Zero at a flexible pulley in equilibrium.
pub fn pulley_torque(pulley: &PulleySpec, frame: &PulleyFrame, prev: Point, next: Point) -> f64 {
    let (p1, p2) = flexion_angles(frame, prev, next);
    pulley.height * (p1.sin() - p2.sin()) - 0.5 * pulley.width * (p1.cos() - p2.cos())
}

/// Straight tendon span between two consecutive active points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    /// Configuration pulley indices at either end.
    pub from: usize,
    pub to: usize,
    pub from_phalange: usize,
    pub to_phalange: usize,
    pub start: Point,
    pub end: Point,
}

impl Span {
    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    /// Whether the span bridges joint `joint` (0 = MCP).
    pub fn crosses(&self, joint: usize) -> bool {
        self.from_phalange <= joint && self.to_phalange > joint
    }
}

/// Tendon path through its active points.
#[derive(Debug, Clone, PartialEq)]
pub struct TendonPolyline {
    pub tendon: Tendon,
    /// Active points as configuration pulley indices, ground to TAP.
    pub points: Vec<usize>,
    pub spans: Vec<Span>,
    /// Length of tendon lying across pulley widths.
    pub wrapped: f64,
}

impl TendonPolyline {
    pub fn length(&self) -> f64 {
        self.spans.iter().map(Span::length).sum::<f64>() + self.wrapped
    }

    pub fn span_across(&self, joint: usize) -> Option<&Span> {
        self.spans.iter().find(|s| s.crosses(joint))
    }

    /// Signed moment arm about joint `joint`; positive flexes. Zero when the
    /// tendon does not cross the joint.
    pub fn moment_arm(&self, joint: usize, joints: &[Point; 3]) -> f64 {
        match self.span_across(joint) {
            Some(span) => {
                let d = span.end - span.start;
                let len = d.norm();
                if len > 0.0 {
                    cross(d / len, joints[joint] - span.start)
                } else {
                    0.0
                }
            }
            None => 0.0,
        }
    }

    /// Vertices of the path: every active corner in order, duplicates removed.
    pub fn vertices(&self) -> Vec<Point> {
        let mut out: Vec<Point> = Vec::with_capacity(2 * self.spans.len() + 1);
        for s in &self.spans {
            for p in [s.start, s.end] {
                if out.last().is_none_or(|l| (*l - p).norm() > 0.0) {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Neighbouring path points around active pulley `pulley`.
    pub fn neighbours(&self, pulley: usize) -> Option<(Point, Point)> {
        let k = self.spans.iter().position(|s| s.to == pulley)?;
        let next = self.spans.get(k + 1)?;
        Some((self.spans[k].start, next.end))
    }
}

/// Complete kinematic state of a configuration at fixed joint angles.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemGeometry {
    pub theta: [f64; 3],
    pub joints: [Point; 3],
    /// Pulley angle per configuration pulley.
    pub beta: Vec<f64>,
    pub frames: Vec<PulleyFrame>,
    pub active: ActiveSets,
    /// One polyline per configuration route, in route order.
    pub polylines: Vec<TendonPolyline>,
    /// The activation search ended in a cycle and the union set was kept.
    pub activation_cycle: bool,
}

impl SystemGeometry {
    pub fn polyline(&self, tendon: Tendon) -> Option<&TendonPolyline> {
        self.polylines.iter().find(|p| p.tendon == tendon)
    }

    /// Signed moment arms `d[j][t]` with t = 0 for FDP and 1 for FDS.
    pub fn moment_arms(&self) -> [[f64; 2]; 3] {
        let mut d = [[0.0; 2]; 3];
        for p in &self.polylines {
            let t = match p.tendon {
                Tendon::Fdp => 0,
                Tendon::Fds => 1,
            };
            for (j, row) in d.iter_mut().enumerate() {
                row[t] = p.moment_arm(j, &self.joints);
            }
        }
        d
    }

    /// Wrap-angle mismatch `φ1 − φ2` for every active flexible pulley and tendon.
    pub fn flexible_mismatch(&self, config: &TpsConfiguration) -> Vec<(usize, Tendon, f64)> {
        let mut out = Vec::new();
        for p in &self.polylines {
            for &i in &p.points {
                if config.pulleys[i].kind != PulleyKind::Flexible {
                    continue;
                }
                if let Some((prev, next)) = p.neighbours(i) {
                    let (a, b) = flexion_angles(&self.frames[i], prev, next);
                    out.push((i, p.tendon, wrap_angle(a - b)));
                }
            }
        }
        out
    }

    pub fn is_active(&self, config: &TpsConfiguration, tendon: Tendon, pulley: usize) -> bool {
        config
            .routes
            .iter()
            .zip(&self.active)
            .any(|(r, a)| r.tendon == tendon && r.points.iter().zip(a).any(|(&p, &on)| p == pulley && on))
    }
}

/// Maps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    } else if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// All route points active.
pub fn all_active(config: &TpsConfiguration) -> ActiveSets {
    config.routes.iter().map(|r| vec![true; r.points.len()]).collect()
}

/// Stiff angles for every pulley.
pub fn default_betas(config: &TpsConfiguration) -> Vec<f64> {
    vec![STIFF_BETA; config.pulleys.len()]
}

fn route_weights(config: &TpsConfiguration) -> Vec<f64> {
    config
        .routes
        .iter()
        .map(|r| config.tension_of(r.tendon, 1.0))
        .collect()
}

fn compute_frames(config: &TpsConfiguration, theta: &[f64; 3], joints: &[Point; 3], beta: &[f64]) -> Vec<PulleyFrame> {
    config
        .pulleys
        .iter()
        .zip(beta)
        .map(|(p, &b)| {
            let b = if p.kind == PulleyKind::Flexible { b } else { STIFF_BETA };
            pulley_frame(&config.finger, joints, theta, p, b)
        })
        .collect()
}

/// Exit of the last active point before `pos` and entry of the first active
/// point after it.
fn route_neighbours(frames: &[PulleyFrame], points: &[usize], active: &[bool], pos: usize) -> (Point, Point) {
    let prev = (0..pos).rev().find(|&k| active[k]).expect("ground is always active");
    let next = (pos + 1..points.len())
        .find(|&k| active[k])
        .expect("the attachment is always active");
    (frames[points[prev]].s, frames[points[next]].q)
}

struct Workspace<'a> {
    config: &'a TpsConfiguration,
    theta: [f64; 3],
    joints: [Point; 3],
    beta: Vec<f64>,
    frames: Vec<PulleyFrame>,
    weights: Vec<f64>,
}

impl<'a> Workspace<'a> {
    fn new(config: &'a TpsConfiguration, theta: [f64; 3], beta: Vec<f64>) -> Self {
        let joints = joint_positions(&config.finger, &theta);
        let beta: Vec<f64> = config
            .pulleys
            .iter()
            .zip(beta)
            .map(|(p, b)| if p.kind == PulleyKind::Flexible { b } else { STIFF_BETA })
            .collect();
        let frames = compute_frames(config, &theta, &joints, &beta);
        Self {
            config,
            theta,
            joints,
            beta,
            frames,
            weights: route_weights(config),
        }
    }

    fn set_beta(&mut self, i: usize, b: f64) {
        self.beta[i] = b;
        self.frames[i] = pulley_frame(&self.config.finger, &self.joints, &self.theta, &self.config.pulleys[i], b);
    }

    /// Weighted pulley torque of flexible pulley `i` at angle `b`.
    fn torque_at(&self, i: usize, b: f64, active: &ActiveSets) -> f64 {
        let pulley = &self.config.pulleys[i];
        let frame = pulley_frame(&self.config.finger, &self.joints, &self.theta, pulley, b);
        let mut total = 0.0;
        let mut wsum = 0.0;
        for (ri, route) in self.config.routes.iter().enumerate() {
            for (pos, &p) in route.points.iter().enumerate() {
                if p == i && active[ri][pos] {
                    let (prev, next) = route_neighbours(&self.frames, &route.points, &active[ri], pos);
                    total += self.weights[ri] * pulley_torque(pulley, &frame, prev, next);
                    wsum += self.weights[ri];
                }
            }
        }
        if wsum > 0.0 {
            total / wsum
        } else {
            // a tendon without load still positions the pulley
            let mut t = 0.0;
            for (ri, route) in self.config.routes.iter().enumerate() {
                for (pos, &p) in route.points.iter().enumerate() {
                    if p == i && active[ri][pos] {
                        let (prev, next) = route_neighbours(&self.frames, &route.points, &active[ri], pos);
                        t += pulley_torque(pulley, &frame, prev, next);
                    }
                }
            }
            t
        }
    }

    fn flexible_active(&self, active: &ActiveSets) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for (ri, route) in self.config.routes.iter().enumerate() {
            for (pos, &p) in route.points.iter().enumerate() {
                if active[ri][pos] && self.config.pulleys[p].kind == PulleyKind::Flexible && !out.contains(&p) {
                    out.push(p);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Solves every active flexible pulley for zero torque, sweeping over the
    /// pulleys until their angles stop changing.
    fn solve_betas(&mut self, active: &ActiveSets) -> Result<()> {
        let flex = self.flexible_active(active);
        if flex.is_empty() {
            return Ok(());
        }
        for _ in 0..100 {
            let mut change: f64 = 0.0;
            for &i in &flex {
                let b = self.solve_one(i, active)?;
                change = change.max((b - self.beta[i]).abs());
                self.set_beta(i, b);
            }
            if change < 1e-14 || flex.len() == 1 {
                return Ok(());
            }
        }
        Err(TpsError::DegenerateGeometry(
            "coupled flexible pulley angles did not settle".into(),
        ))
    }

    /// Zero-torque angle of flexible pulley `i` with neighbours held fixed.
    /// Looks for a minimum of tendon length (torque crossing from negative to
    /// positive), starting near the current angle.
    fn solve_one(&self, i: usize, active: &ActiveSets) -> Result<f64> {
        let lo_lim = -PI + BETA_MARGIN;
        let hi_lim = -BETA_MARGIN;
        let f = |b: f64| self.torque_at(i, b, active);
        let b0 = self.beta[i].clamp(lo_lim, hi_lim);
        let f0 = f(b0);
        if f0 == 0.0 {
            return Ok(b0);
        }
        // walk downhill in length until the torque changes sign
        let dir = if f0 > 0.0 { -1.0 } else { 1.0 };
        let mut step = 0.01;
        let mut a = b0;
        let mut fa = f0;
        loop {
            let b = (a + dir * step).clamp(lo_lim, hi_lim);
            let fb = f(b);
            if fb.signum() != fa.signum() || fb == 0.0 {
                let (lo, hi, flo, fhi) = if dir > 0.0 { (a, b, fa, fb) } else { (b, a, fb, fa) };
                return refine_root(f, lo, hi, flo, fhi);
            }
            if b == lo_lim || b == hi_lim {
                return Err(TpsError::DegenerateGeometry(format!(
                    "flexible pulley {} has no torque-free angle inside its range",
                    self.config.pulleys[i].label
                )));
            }
            a = b;
            fa = fb;
            step *= 2.0;
        }
    }

    /// One Gauss-Seidel activation pass. Returns whether any flag changed.
    fn update_activation(&mut self, active: &mut ActiveSets) -> bool {
        let mut changed = false;
        for (ri, route) in self.config.routes.iter().enumerate() {
            for pos in 1..route.points.len() - 1 {
                let p = route.points[pos];
                let (prev, next) = route_neighbours(&self.frames, &route.points, &active[ri], pos);
                let clearance = distance_to_chord(self.frames[p].u, prev, next);
                // ties count as active so the set is stable at contact
                let on = clearance >= self.config.pulleys[p].height - 1e-9;
                if on != active[ri][pos] {
                    active[ri][pos] = on;
                    changed = true;
                }
            }
        }
        changed
    }

    fn finish(self, active: ActiveSets, activation_cycle: bool) -> SystemGeometry {
        let polylines = self
            .config
            .routes
            .iter()
            .zip(&active)
            .map(|(route, on)| build_polyline(self.config, &self.frames, route.tendon, &route.points, on))
            .collect();
        let mut beta = self.beta.clone();
        for (i, p) in self.config.pulleys.iter().enumerate() {
            let used = self
                .config
                .routes
                .iter()
                .zip(&active)
                .any(|(r, a)| r.points.iter().zip(a).any(|(&q, &on)| q == i && on));
            if p.kind == PulleyKind::Flexible && !used {
                beta[i] = STIFF_BETA;
            }
        }
        let frames = if beta == self.beta {
            self.frames
        } else {
            compute_frames(self.config, &self.theta, &self.joints, &beta)
        };
        SystemGeometry {
            theta: self.theta,
            joints: self.joints,
            beta,
            frames,
            active,
            polylines,
            activation_cycle,
        }
    }
}

/// Illinois-safeguarded regula falsi on a sign-changing bracket.
fn refine_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut flo: f64, mut fhi: f64) -> Result<f64> {
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    let mut side = 0i8;
    for _ in 0..200 {
        if hi - lo <= 1e-15 * (1.0 + lo.abs()) {
            break;
        }
        let mut x = (lo * fhi - hi * flo) / (fhi - flo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            fhi = fx;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    Ok(if flo.abs() < fhi.abs() { lo } else { hi })
}

fn build_polyline(
    config: &TpsConfiguration,
    frames: &[PulleyFrame],
    tendon: Tendon,
    route: &[usize],
    active: &[bool],
) -> TendonPolyline {
    let points: Vec<usize> = route.iter().zip(active).filter(|(_, &on)| on).map(|(&p, _)| p).collect();
    let spans = points
        .windows(2)
        .map(|w| Span {
            from: w[0],
            to: w[1],
            from_phalange: config.pulleys[w[0]].phalange,
            to_phalange: config.pulleys[w[1]].phalange,
            start: frames[w[0]].s,
            end: frames[w[1]].q,
        })
        .collect();
    let wrapped = points.iter().map(|&p| (frames[p].s - frames[p].q).norm()).sum();
    TendonPolyline {
        tendon,
        points,
        spans,
        wrapped,
    }
}

fn check_theta(theta: &[f64; 3]) -> Result<()> {
    if theta.iter().all(|t| t.is_finite()) {
        Ok(())
    } else {
        Err(TpsError::DegenerateGeometry(format!("non-finite joint angles {theta:?}")))
    }
}

fn check_active(config: &TpsConfiguration, active: &ActiveSets) -> Result<()> {
    let ok = active.len() == config.routes.len()
        && config.routes.iter().zip(active).all(|(r, a)| {
            a.len() == r.points.len() && a.first() == Some(&true) && a.last() == Some(&true)
        });
    if ok {
        Ok(())
    } else {
        Err(TpsError::InvalidModel("activation sets do not match the routes".into()))
    }
}

/// Geometry with the given activation sets held fixed; flexible pulley
/// angles are solved for zero torque starting from `beta_guess`.
pub fn frozen_geometry(
    config: &TpsConfiguration,
    theta: &[f64; 3],
    active: &ActiveSets,
    beta_guess: Option<&[f64]>,
) -> Result<SystemGeometry> {
    check_theta(theta)?;
    check_active(config, active)?;
    let beta = beta_guess.map(<[f64]>::to_vec).unwrap_or_else(|| default_betas(config));
    let mut ws = Workspace::new(config, *theta, beta);
    ws.solve_betas(active)?;
    Ok(ws.finish(active.clone(), false))
}

/// Geometry with both activation sets and pulley angles taken as given.
pub fn geometry_with_betas(
    config: &TpsConfiguration,
    theta: &[f64; 3],
    active: &ActiveSets,
    beta: &[f64],
) -> Result<SystemGeometry> {
    check_theta(theta)?;
    check_active(config, active)?;
    let ws = Workspace::new(config, *theta, beta.to_vec());
    let mut g = ws.finish(active.clone(), false);
    // keep the caller's angles even on inactive pulleys
    g.beta = config
        .pulleys
        .iter()
        .zip(beta)
        .map(|(p, &b)| if p.kind == PulleyKind::Flexible { b } else { STIFF_BETA })
        .collect();
    g.frames = compute_frames(config, theta, &g.joints, &g.beta);
    Ok(g)
}

/// Geometry at `theta` with pulley activation found by fixed-point
/// iteration from `active_guess` (all active when absent).
///
/// If the iteration cycles, the union of the sets in the cycle is kept and
/// the result is flagged with `activation_cycle`.
pub fn resolve_geometry(
    config: &TpsConfiguration,
    theta: &[f64; 3],
    active_guess: Option<&ActiveSets>,
    beta_guess: Option<&[f64]>,
) -> Result<SystemGeometry> {
    check_theta(theta)?;
    let mut active = active_guess.cloned().unwrap_or_else(|| all_active(config));
    check_active(config, &active)?;
    let beta = beta_guess.map(<[f64]>::to_vec).unwrap_or_else(|| default_betas(config));
    let mut ws = Workspace::new(config, *theta, beta);
    let mut history: Vec<ActiveSets> = vec![active.clone()];
    for _ in 0..MAX_ACTIVATION_PASSES {
        ws.solve_betas(&active)?;
        if !ws.update_activation(&mut active) {
            return Ok(ws.finish(active, false));
        }
        if let Some(first) = history.iter().position(|h| *h == active) {
            let mut union = active.clone();
            for h in &history[first..] {
                for (u, a) in union.iter_mut().zip(h) {
                    for (x, &y) in u.iter_mut().zip(a) {
                        *x |= y;
                    }
                }
            }
            ws.solve_betas(&union)?;
            return Ok(ws.finish(union, true));
        }
        history.push(active.clone());
    }
    let n = history.len();
    Err(TpsError::ActivationNonConvergence {
        previous: history[n - 2].clone(),
        last: active,
    })
}

/// Whether the activation sets are self-consistent at this geometry: one
/// more activation pass changes nothing.
pub fn activation_consistent(config: &TpsConfiguration, geometry: &SystemGeometry) -> bool {
    let mut ws = Workspace::new(config, geometry.theta, geometry.beta.clone());
    let mut active = geometry.active.clone();
    !ws.update_activation(&mut active)
}

/// Polyline of one tendon after activation has been resolved.
pub fn tendon_polyline(config: &TpsConfiguration, tendon: Tendon, theta: &[f64; 3]) -> Result<TendonPolyline> {
    let g = resolve_geometry(config, theta, None, None)?;
    g.polyline(tendon)
        .cloned()
        .ok_or_else(|| TpsError::Unsupported(format!("{} has no {tendon} route", config.name)))
}

/// Tendon length with activation and pulley angles frozen; flexible pulleys
/// keep the angles in `beta` (or are re-solved when `resolve_beta`).
pub fn tendon_length(
    config: &TpsConfiguration,
    tendon: Tendon,
    theta: &[f64; 3],
    active: &ActiveSets,
    beta: &[f64],
    resolve_beta: bool,
) -> Result<f64> {
    let g = if resolve_beta {
        frozen_geometry(config, theta, active, Some(beta))?
    } else {
        geometry_with_betas(config, theta, active, beta)?
    };
    g.polyline(tendon)
        .map(TendonPolyline::length)
        .ok_or_else(|| TpsError::Unsupported(format!("{} has no {tendon} route", config.name)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_configuration, ParameterMap};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cfg(name: &str, kv: &[(&str, &str)]) -> TpsConfiguration {
        let map: ParameterMap = kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        build_configuration(name, &map).unwrap()
    }

    #[test]
    fn straight_finger_joints() {
        let f = FingerModel::index_finger();
        let z = joint_positions(&f, &[0.0; 3]);
        assert_eq!(z[1], Point::new(42.0, 0.0));
        assert_eq!(z[2], Point::new(69.0, 0.0));
        assert_abs_diff_eq!(tip_position(&f, &[0.0; 3]).re, 88.5);
    }

    #[test]
    fn right_angle_mcp_points_palmar() {
        let f = FingerModel::index_finger();
        let z = joint_positions(&f, &[FRAC_PI_2, 0.0, 0.0]);
        assert_abs_diff_eq!(z[1].re, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z[1].im, -42.0, epsilon = 1e-12);
    }

    #[test]
    fn a2_corners_on_straight_finger() {
        let c = cfg("C-C-C", &[]);
        let i = c.pulley_index("A2").unwrap();
        let z = joint_positions(&c.finger, &[0.0; 3]);
        let fr = pulley_frame(&c.finger, &z, &[0.0; 3], &c.pulleys[i], STIFF_BETA);
        assert_abs_diff_eq!(fr.u.re, 21.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fr.u.im, -3.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fr.r.im, -4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fr.q.re, 20.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fr.s.re, 21.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fr.q.im, -4.0, epsilon = 1e-12);
    }

    #[test]
    fn clamped_distance_cases() {
        let s = Point::new(0.0, 0.0);
        let q = Point::new(10.0, 0.0);
        let inside = point_segment_distance(Point::new(3.0, 2.0), s, q).unwrap();
        assert_eq!(inside.case, ClosestCase::Interior);
        assert_abs_diff_eq!(inside.distance, 2.0);
        let before = point_segment_distance(Point::new(-2.0, 0.0), s, q).unwrap();
        assert_eq!(before.case, ClosestCase::Start);
        assert_abs_diff_eq!(before.alpha, -0.2);
        assert_abs_diff_eq!(before.distance, 2.0);
        let after = point_segment_distance(Point::new(13.0, 4.0), s, q).unwrap();
        assert_eq!(after.case, ClosestCase::End);
        assert_abs_diff_eq!(after.distance, 5.0);
        assert!(point_segment_distance(Point::new(1.0, 1.0), s, s).is_err());
    }

    /// Dense sampling of the segment as an independent distance oracle.
    fn sampled_distance(z: Point, s: Point, q: Point) -> f64 {
        (0..=20_000)
            .map(|k| {
                let a = k as f64 / 20_000.0;
                (z - (s + a * (q - s))).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    proptest! {
        #[test]
        fn distance_matches_sampling(
            zx in -20.0..20.0f64, zy in -20.0..20.0f64,
            sx in -10.0..10.0f64, sy in -10.0..10.0f64,
            qx in -10.0..10.0f64, qy in -10.0..10.0f64,
        ) {
            let (z, s, q) = (Point::new(zx, zy), Point::new(sx, sy), Point::new(qx, qy));
            prop_assume!((q - s).norm() > 1e-3);
            let d = point_segment_distance(z, s, q).unwrap().distance;
            let oracle = sampled_distance(z, s, q);
            prop_assert!(d <= oracle + 1e-12);
            prop_assert!(oracle - d <= (q - s).norm() / 20_000.0 + 1e-12);
        }

        #[test]
        fn distance_is_symmetric_in_endpoints(
            zx in -20.0..20.0f64, zy in -20.0..20.0f64,
            sx in -10.0..10.0f64, qx in -10.0..10.0f64,
        ) {
            let (z, s, q) = (Point::new(zx, zy), Point::new(sx, 1.0), Point::new(qx, -1.0));
            let a = point_segment_distance(z, s, q).unwrap().distance;
            let b = point_segment_distance(z, q, s).unwrap().distance;
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn straight_finger_all_active() {
        let c = cfg("C-C-C", &[]);
        let g = resolve_geometry(&c, &[0.0; 3], None, None).unwrap();
        assert_eq!(g.active, vec![vec![true; 4]]);
        assert!(activation_consistent(&c, &g));
        let p = &g.polylines[0];
        assert_eq!(p.spans.len(), 3);
        // MCP arm from ground to A2 proximal corner
        assert!(p.moment_arm(0, &g.joints) > 4.0);
        assert!(p.moment_arm(2, &g.joints) > 0.0);
    }

    #[test]
    fn tall_c_pulley_engages_with_flexion() {
        let c = cfg("CD-C-C", &[("h_c", "3.0")]);
        let c1 = c.pulley_index("C1").unwrap();
        let pos = c.routes[0].points.iter().position(|&p| p == c1).unwrap();
        let g0 = resolve_geometry(&c, &[0.0; 3], None, None).unwrap();
        assert!(!g0.active[0][pos]);
        let theta = [0.0, 80f64.to_radians(), 0.0];
        let g1 = resolve_geometry(&c, &theta, None, None).unwrap();
        assert!(g1.active[0][pos]);
    }

    #[test]
    fn fds_has_no_dip_arm() {
        let c = cfg("C-C-", &[]);
        let g = resolve_geometry(&c, &[0.3, 0.4, 0.2], None, None).unwrap();
        let p = g.polyline(Tendon::Fds).unwrap();
        assert!(p.span_across(2).is_none());
        assert_eq!(p.moment_arm(2, &g.joints), 0.0);
    }

    /// Central difference of the tendon length with the active set and
    /// pulley angles frozen; the oracle for moment arms.
    fn fd_arm(c: &TpsConfiguration, g: &SystemGeometry, tendon: Tendon, j: usize) -> f64 {
        let h = 1e-6;
        let mut tp = g.theta;
        let mut tm = g.theta;
        tp[j] += h;
        tm[j] -= h;
        let lp = tendon_length(c, tendon, &tp, &g.active, &g.beta, true).unwrap();
        let lm = tendon_length(c, tendon, &tm, &g.active, &g.beta, true).unwrap();
        -(lp - lm) / (2.0 * h)
    }

    #[test]
    fn moment_arm_is_negative_length_gradient() {
        let cases = [
            ("C-C-C", vec![]),
            ("C-D-P", vec![]),
            ("CD-CD-C", vec![("h_c", "2.0")]),
            ("C~D-C~D-C", vec![("h_c", "2.0"), ("e", "10e")]),
            ("C~D-C~D=C", vec![("h_c", "2.0"), ("e", "10e"), ("w_a", "2.0")]),
        ];
        for (name, kv) in cases {
            let c = cfg(name, &kv);
            for theta in [[0.2, 0.3, 0.1], [0.9, 1.2, 0.8], [1.4, 0.2, 1.1]] {
                let g = resolve_geometry(&c, &theta, None, None).unwrap();
                let arms = g.moment_arms();
                for route in &c.routes {
                    let t = if route.tendon == Tendon::Fdp { 0 } else { 1 };
                    for (j, row) in arms.iter().enumerate() {
                        let fd = fd_arm(&c, &g, route.tendon, j);
                        assert!((row[t] - fd).abs() < 1e-5, "{name} {theta:?} j{j} {} vs {fd}", row[t]);
                    }
                }
            }
        }
    }

    /// Golden-section minimisation of tendon length over one pulley angle.
    fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        while b - a > 1e-12 {
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - g * (b - a);
            d = a + g * (b - a);
        }
        0.5 * (a + b)
    }

    #[test]
    fn flexible_angle_minimises_length() {
        let c = cfg("CD-C-C", &[("h_c", "2.0")]);
        let mut c = c;
        let i = c.pulley_index("C1").unwrap();
        c.pulleys[i].kind = PulleyKind::Flexible;
        let theta = [0.8, 1.0, 0.4];
        let g = resolve_geometry(&c, &theta, None, None).unwrap();
        let pos = c.routes[0].points.iter().position(|&p| p == i).unwrap();
        assert!(g.active[0][pos]);
        let solved = g.beta[i];
        let length = |b: f64| {
            let mut beta = g.beta.clone();
            beta[i] = b;
            tendon_length(&c, Tendon::Fdp, &theta, &g.active, &beta, false).unwrap()
        };
        let oracle = golden_min(length, solved - 0.5, (solved + 0.5).min(-1e-3));
        assert!((solved - oracle).abs() < 1e-5, "{solved} vs {oracle}");
        for (_, _, dphi) in g.flexible_mismatch(&c) {
            assert!(dphi.abs() < 1e-10);
        }
    }

    #[test]
    fn stiff_angle_is_fixed() {
        let c = cfg("CD-CD-C", &[("h_c", "2.0")]);
        let g = resolve_geometry(&c, &[0.5, 0.5, 0.5], None, None).unwrap();
        assert!(g.beta.iter().all(|&b| b == STIFF_BETA));
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = cfg("C-C-C", &[]);
        assert!(resolve_geometry(&c, &[f64::NAN, 0.0, 0.0], None, None).is_err());
        assert!(frozen_geometry(&c, &[0.0; 3], &vec![vec![true; 3]], None).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(0.5), 0.5);
    }
}
