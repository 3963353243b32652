//! Quasi-static equilibrium of the 3R finger and the tension sweep.
//!
//! Each free joint balances its flexure spring against the tendon moments,
//! `K_j (θ_j − θ_j0) = Σ_t T_t d_jt`. Flexible pulley angles are eliminated
//! by solving their zero-torque condition inside every residual evaluation,
//! so the outer unknowns are only the free joint angles (plus the tension
//! itself when locating a joint-locking event).

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TpsError};
use crate::geometry::{self, ActiveSets, SystemGeometry};
use crate::metrics::{self, StepMetrics};
use crate::model::{EquilibriumState, TpsConfiguration};

/// Trust-region dogleg settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Convergence bound on the scaled residual, ∞-norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relative forward-difference step for the Jacobian.
    pub fd_step: f64,
    pub initial_radius: f64,
    pub max_radius: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 200,
            fd_step: 1e-7,
            initial_radius: 0.1,
            max_radius: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoglegResult {
    pub x: DVector<f64>,
    pub residual: DVector<f64>,
    pub iterations: usize,
}

fn fd_jacobian<F>(f: &mut F, x: &DVector<f64>, fx: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(fx.len(), n);
    for k in 0..n {
        let h = step * (1.0 + x[k].abs());
        let mut xp = x.clone();
        xp[k] += h;
        let fp = match f(&xp) {
            Ok(v) => v,
            Err(_) => {
                // one-sided difference from the other side
                let mut xm = x.clone();
                xm[k] -= h;
                let fm = f(&xm)?;
                jac.set_column(k, &((fx - fm) / h));
                continue;
            }
        };
        jac.set_column(k, &((fp - fx) / h));
    }
    Ok(jac)
}

/// Powell dogleg trust-region iteration for a square system `f(x) = 0`.
///
/// Converged when `‖f‖∞ ≤ tolerance`. Failed trial evaluations shrink the
/// trust region instead of aborting.
pub fn dogleg<F>(mut f: F, x0: DVector<f64>, opts: &SolverOptions) -> Result<DoglegResult>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut x = x0;
    let mut fx = f(&x)?;
    let mut radius = opts.initial_radius;
    for it in 0..opts.max_iterations {
        if fx.amax() <= opts.tolerance {
            return Ok(DoglegResult {
                x,
                residual: fx,
                iterations: it,
            });
        }
        let jac = fd_jacobian(&mut f, &x, &fx, opts.fd_step)?;
        let grad = jac.transpose() * &fx;
        let gn = jac
            .clone()
            .lu()
            .solve(&(-&fx))
            .filter(|p| p.iter().all(|v| v.is_finite()))
            .or_else(|| jac.clone().svd(true, true).solve(&(-&fx), 1e-14).ok());
        let jg = &jac * &grad;
        let sd_len = grad.norm_squared() / jg.norm_squared().max(f64::MIN_POSITIVE);
        let sd = -sd_len * &grad;
        let step = match gn {
            Some(p) if p.norm() <= radius => p,
            gn => {
                if sd.norm() >= radius || gn.is_none() {
                    -(radius / grad.norm().max(f64::MIN_POSITIVE)) * &grad
                } else {
                    let p = gn.expect("checked above");
                    let d = &p - &sd;
                    let (a, b, c) = (d.norm_squared(), 2.0 * sd.dot(&d), sd.norm_squared() - radius * radius);
                    let tau = (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
                    &sd + tau * d
                }
            }
        };
        let step_norm = step.norm();
        let trial = &x + &step;
        let predicted = 0.5 * (fx.norm_squared() - (&fx + &jac * &step).norm_squared());
        let ratio = match f(&trial) {
            Ok(ft) => {
                let actual = 0.5 * (fx.norm_squared() - ft.norm_squared());
                let rho = if predicted > 0.0 { actual / predicted } else { -1.0 };
                if rho > 1e-4 || (ft.amax() <= opts.tolerance) {
                    x = trial;
                    fx = ft;
                }
                rho
            }
            Err(_) => -1.0,
        };
        if ratio < 0.25 {
            radius = 0.25 * step_norm;
        } else if ratio > 0.75 && step_norm >= 0.99 * radius {
            radius = (2.0 * radius).min(opts.max_radius);
        }
        if radius < 1e-14 {
            break;
        }
    }
    if fx.amax() <= opts.tolerance {
        let iterations = opts.max_iterations;
        return Ok(DoglegResult {
            x,
            residual: fx,
            iterations,
        });
    }
    Err(TpsError::SolverNonConvergence {
        iterations: opts.max_iterations,
        residual: fx.amax(),
        best: x.iter().copied().collect(),
    })
}

/// Moment residual `K_j (θ_j − θ_j0) − Σ_t T_t d_jt` of one joint, N·mm.
pub fn joint_residual(config: &TpsConfiguration, geometry: &SystemGeometry, t1: f64, t2: f64, joint: usize) -> f64 {
    let f = &config.finger;
    let d = geometry.moment_arms();
    f.stiffness[joint] * (geometry.theta[joint] - f.neutral[joint]) - t1 * d[joint][0] - t2 * d[joint][1]
}

/// Residual of a state: moment balance of every free joint (N·mm) followed by
/// the wrap-angle mismatch `φ1 − φ2` of every active flexible pulley (rad).
///
/// The state's activation sets and pulley angles are used as given.
pub fn residual(config: &TpsConfiguration, state: &EquilibriumState) -> Result<Vec<f64>> {
    let g = geometry::geometry_with_betas(config, &state.theta, &state.active, &state.beta)?;
    let mut out: Vec<f64> = (0..3)
        .filter(|&j| !state.locked[j])
        .map(|j| joint_residual(config, &g, state.t1, state.t2, j))
        .collect();
    out.extend(g.flexible_mismatch(config).into_iter().map(|(_, _, d)| d));
    Ok(out)
}

/// Builds the state record for a solved geometry.
pub fn state_from_geometry(geometry: &SystemGeometry, locked: [bool; 3], t1: f64, t2: f64) -> EquilibriumState {
    EquilibriumState {
        theta: geometry.theta,
        locked,
        t1,
        t2,
        beta: geometry.beta.clone(),
        active: geometry.active.clone(),
        moment_arms: geometry.moment_arms(),
    }
}

/// Neutral-pose state with every pulley active, before any load.
pub fn initial_state(config: &TpsConfiguration) -> Result<EquilibriumState> {
    let g = geometry::resolve_geometry(config, &config.finger.neutral, None, None)?;
    Ok(state_from_geometry(&g, [false; 3], 0.0, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TensionVar {
    Fixed(f64),
    /// `T_s = start + s · span` with `s` the last unknown.
    Bracket { start: f64, span: f64 },
}

struct Problem<'a> {
    config: &'a TpsConfiguration,
    base: [f64; 3],
    unknowns: Vec<usize>,
    equations: Vec<usize>,
    tension: TensionVar,
}

impl Problem<'_> {
    fn unpack(&self, x: &DVector<f64>) -> ([f64; 3], f64) {
        let mut theta = self.base;
        for (k, &j) in self.unknowns.iter().enumerate() {
            theta[j] = x[k];
        }
        let t = match self.tension {
            TensionVar::Fixed(t) => t,
            TensionVar::Bracket { start, span } => start + x[self.unknowns.len()] * span,
        };
        (theta, t)
    }

    fn evaluate(&self, x: &DVector<f64>, active: &ActiveSets, beta: &[f64]) -> Result<(DVector<f64>, SystemGeometry)> {
        let (theta, t) = self.unpack(x);
        let g = geometry::frozen_geometry(self.config, &theta, active, Some(beta))?;
        let (t1, t2) = self.config.tensions(t);
        let scale = self.config.finger.stiffness[0];
        let r = DVector::from_iterator(
            self.equations.len(),
            self.equations
                .iter()
                .map(|&j| joint_residual(self.config, &g, t1, t2, j) / scale),
        );
        Ok((r, g))
    }
}

/// Converged equilibrium with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub state: EquilibriumState,
    pub geometry: SystemGeometry,
    /// Total tension `T_s`, N.
    pub t_s: f64,
    /// Scaled residual ∞-norm (moments divided by the MCP stiffness).
    pub residual: f64,
    pub iterations: usize,
}

fn solve_problem(
    problem: &Problem,
    x0: DVector<f64>,
    active0: &ActiveSets,
    beta0: &[f64],
    locked: [bool; 3],
    opts: &SolverOptions,
) -> Result<Solution> {
    let mut active = active0.clone();
    let mut beta = beta0.to_vec();
    let mut x = x0;
    let mut history: Vec<ActiveSets> = vec![active.clone()];
    let mut iterations = 0;
    for _ in 0..geometry::MAX_ACTIVATION_PASSES {
        let result = if problem.unknowns.is_empty() && matches!(problem.tension, TensionVar::Fixed(_)) {
            let (r, _) = problem.evaluate(&x, &active, &beta)?;
            DoglegResult {
                x: x.clone(),
                residual: r,
                iterations: 0,
            }
        } else {
            let mut warm = beta.clone();
            dogleg(
                |v| {
                    let (r, g) = problem.evaluate(v, &active, &warm)?;
                    warm = g.beta;
                    Ok(r)
                },
                x.clone(),
                opts,
            )?
        };
        iterations += result.iterations;
        x = result.x;
        let (theta, t) = problem.unpack(&x);
        let frozen = geometry::frozen_geometry(problem.config, &theta, &active, Some(&beta))?;
        beta = frozen.beta.clone();
        let settled = geometry::resolve_geometry(problem.config, &theta, Some(&active), Some(&beta))?;
        let finish = |g: SystemGeometry, residual: f64, iterations: usize| {
            let (t1, t2) = problem.config.tensions(t);
            Solution {
                state: state_from_geometry(&g, locked, t1, t2),
                geometry: g,
                t_s: t,
                residual,
                iterations,
            }
        };
        if settled.active == active {
            return Ok(finish(frozen, result.residual.amax(), iterations));
        }
        if settled.activation_cycle || history.contains(&settled.active) {
            // boundary chatter: keep the union of the competing sets
            let mut union = active.clone();
            for h in history.iter().chain(std::iter::once(&settled.active)) {
                for (u, a) in union.iter_mut().zip(h) {
                    for (x, &y) in u.iter_mut().zip(a) {
                        *x |= y;
                    }
                }
            }
            let mut warm = beta.clone();
            let r = dogleg(
                |v| {
                    let (r, g) = problem.evaluate(v, &union, &warm)?;
                    warm = g.beta;
                    Ok(r)
                },
                x.clone(),
                opts,
            )?;
            let (theta, _) = problem.unpack(&r.x);
            let mut g = geometry::frozen_geometry(problem.config, &theta, &union, Some(&beta))?;
            g.activation_cycle = true;
            return Ok(finish(g, r.residual.amax(), iterations + r.iterations));
        }
        history.push(settled.active.clone());
        active = settled.active;
        beta = settled.beta;
    }
    Err(TpsError::ActivationNonConvergence {
        previous: history[history.len() - 2].clone(),
        last: active,
    })
}

/// Equilibrium at total tension `t_s`, starting from `guess`. Joints flagged
/// in `guess.locked` stay at their limits.
pub fn solve_equilibrium(
    config: &TpsConfiguration,
    t_s: f64,
    guess: &EquilibriumState,
    opts: &SolverOptions,
) -> Result<Solution> {
    let mut base = guess.theta;
    for j in 0..3 {
        if guess.locked[j] {
            base[j] = config.finger.limits[j];
        }
    }
    let free: Vec<usize> = (0..3).filter(|&j| !guess.locked[j]).collect();
    let problem = Problem {
        config,
        base,
        unknowns: free.clone(),
        equations: free.clone(),
        tension: TensionVar::Fixed(t_s),
    };
    let x0 = DVector::from_iterator(free.len(), free.iter().map(|&j| base[j]));
    solve_problem(&problem, x0, &guess.active, &guess.beta, guess.locked, opts)
}

/// Tension at which free joint `joint` first reaches its limit, between the
/// accepted state `before` at `t_before` and the overshooting state `after`
/// at `t_after`. The joint is pinned at its limit and the tension becomes an
/// unknown; every free joint's balance, the pinned one included, must hold.
pub fn solve_locking_tension(
    config: &TpsConfiguration,
    joint: usize,
    before: &EquilibriumState,
    t_before: f64,
    after: &EquilibriumState,
    t_after: f64,
    opts: &SolverOptions,
) -> Result<Solution> {
    let limit = config.finger.limits[joint];
    let span = t_after - t_before;
    let (a, b) = (before.theta[joint], after.theta[joint]);
    let s0 = if (b - a).abs() > 0.0 { ((limit - a) / (b - a)).clamp(0.0, 1.0) } else { 1.0 };
    let mut base = before.theta;
    for j in 0..3 {
        base[j] = if before.locked[j] {
            config.finger.limits[j]
        } else {
            before.theta[j] + s0 * (after.theta[j] - before.theta[j])
        };
    }
    base[joint] = limit;
    let equations: Vec<usize> = (0..3).filter(|&j| !before.locked[j]).collect();
    let unknowns: Vec<usize> = equations.iter().copied().filter(|&j| j != joint).collect();
    let problem = Problem {
        config,
        base,
        unknowns: unknowns.clone(),
        equations,
        tension: TensionVar::Bracket { start: t_before, span },
    };
    let mut x0: Vec<f64> = unknowns.iter().map(|&j| base[j]).collect();
    x0.push(s0);
    let mut locked = before.locked;
    locked[joint] = true;
    let active = if s0 < 0.5 { &before.active } else { &after.active };
    let beta = if s0 < 0.5 { &before.beta } else { &after.beta };
    let sol = solve_problem(&problem, DVector::from_vec(x0), active, beta, locked, opts)?;
    let s = (sol.t_s - t_before) / span;
    if !(s > -1e-9 && s <= 1.0 + 1e-9) {
        return Err(TpsError::LockingBracket {
            joint,
            lower: t_before,
            upper: t_after,
        });
    }
    Ok(sol)
}

/// Tension schedule and reporting options of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    /// Final total tension, N.
    pub t_max: f64,
    pub steps: usize,
    /// Extra total tensions inserted into the uniform schedule.
    pub checkpoints: Vec<f64>,
    /// Joints left out of the critical bowstringing value.
    pub exclude_joints: [bool; 3],
    pub solver: SolverOptions,
    /// Maximum number of internal step halvings after a failed solve.
    pub max_bisections: usize,
}

impl SweepOptions {
    pub fn uniform(t_max: f64, steps: usize) -> Self {
        Self {
            t_max,
            steps: steps.max(1),
            checkpoints: Vec::new(),
            exclude_joints: [false; 3],
            solver: SolverOptions::default(),
            max_bisections: 6,
        }
    }

    pub fn from_config(config: &TpsConfiguration) -> Self {
        Self::uniform(config.sweep.t_max, config.sweep.steps)
    }

    /// Increasing tensions from 0 to `t_max`, checkpoints included.
    pub fn schedule(&self) -> Vec<f64> {
        let dt = self.t_max / self.steps as f64;
        let mut s: Vec<f64> = (0..=self.steps).map(|k| k as f64 * dt).collect();
        if let Some(last) = s.last_mut() {
            *last = self.t_max;
        }
        for &c in &self.checkpoints {
            if c > 0.0 && c < self.t_max && !s.iter().any(|&t| (t - c).abs() < 1e-9) {
                s.push(c);
            }
        }
        s.sort_by(|a, b| a.partial_cmp(b).expect("finite tensions"));
        s
    }
}

/// One accepted equilibrium of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepStep {
    pub t_s: f64,
    pub state: EquilibriumState,
    pub residual: f64,
    /// Joint that locked at this step, if this step records a locking event.
    pub lock_event: Option<usize>,
    /// Largest wrap-angle mismatch over active flexible pulleys, rad.
    pub flexible_mismatch: f64,
    pub activation_cycle: bool,
    pub metrics: StepMetrics,
}

impl SweepStep {
    pub fn sum_theta(&self) -> f64 {
        self.state.sum_theta()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    /// The schedule reached `t_max`.
    MaxTension,
    /// Every joint reached its limit.
    AllLocked,
    /// A solve failed; the trace holds the steps accepted so far.
    SolverFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockEvent {
    pub joint: usize,
    pub t_s: f64,
    pub theta: [f64; 3],
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTrace {
    pub name: String,
    pub steps: Vec<SweepStep>,
    pub events: Vec<LockEvent>,
    pub terminal: Terminal,
    pub error: Option<TpsError>,
}

impl SweepTrace {
    pub fn last(&self) -> &SweepStep {
        self.steps.last().expect("a trace holds at least the unloaded step")
    }

    /// Step recorded at total tension `t_s` (the grid step when a locking
    /// event shares its tension).
    pub fn step_at(&self, t_s: f64) -> Option<&SweepStep> {
        self.steps
            .iter()
            .rev()
            .find(|s| (s.t_s - t_s).abs() < 1e-9)
    }

    /// Joint angles at `t_s`: exact when recorded, held at the final pose past
    /// full locking, linearly interpolated otherwise.
    pub fn theta_at(&self, t_s: f64) -> [f64; 3] {
        if let Some(s) = self.step_at(t_s) {
            return s.state.theta;
        }
        let last = self.last();
        if t_s >= last.t_s {
            return last.state.theta;
        }
        let k = self.steps.iter().position(|s| s.t_s > t_s).unwrap_or(0).max(1);
        let (a, b) = (&self.steps[k - 1], &self.steps[k]);
        let w = (t_s - a.t_s) / (b.t_s - a.t_s);
        std::array::from_fn(|j| a.state.theta[j] + w * (b.state.theta[j] - a.state.theta[j]))
    }

    /// Bowstringing and stress evaluated at `t_s`, using the recorded pose.
    pub fn metrics_at(&self, config: &TpsConfiguration, t_s: f64, exclude: &[bool; 3]) -> Result<StepMetrics> {
        let theta = self.theta_at(t_s);
        let near = self
            .steps
            .iter()
            .rev()
            .find(|s| s.t_s <= t_s + 1e-9)
            .unwrap_or_else(|| self.last());
        let g = geometry::resolve_geometry(config, &theta, Some(&near.state.active), Some(&near.state.beta))?;
        let (t1, t2) = config.tensions(t_s);
        Ok(metrics::evaluate(config, &g, t1, t2, exclude))
    }

    /// Smallest tension at which the total flexion reaches `sum`, by linear
    /// interpolation between recorded steps.
    pub fn tension_for_sum(&self, sum: f64) -> Option<f64> {
        let first = self.steps.iter().position(|s| s.sum_theta() >= sum - 1e-9)?;
        if first == 0 {
            return Some(self.steps[0].t_s);
        }
        let (a, b) = (&self.steps[first - 1], &self.steps[first]);
        let (sa, sb) = (a.sum_theta(), b.sum_theta());
        if (sb - sa).abs() < 1e-15 {
            return Some(b.t_s);
        }
        Some(a.t_s + (sum - sa) / (sb - sa) * (b.t_s - a.t_s))
    }
}

enum Flow {
    Continue,
    AllLocked,
}

struct Sweeper<'a> {
    config: &'a TpsConfiguration,
    options: &'a SweepOptions,
    current: EquilibriumState,
    t_cur: f64,
    steps: Vec<SweepStep>,
    events: Vec<LockEvent>,
}

impl Sweeper<'_> {
    fn record(&mut self, sol: &Solution, lock_event: Option<usize>) {
        let mismatch = sol
            .geometry
            .flexible_mismatch(self.config)
            .into_iter()
            .map(|(_, _, d)| d.abs())
            .fold(0.0, f64::max);
        let (t1, t2) = (sol.state.t1, sol.state.t2);
        self.steps.push(SweepStep {
            t_s: sol.t_s,
            state: sol.state.clone(),
            residual: sol.residual,
            lock_event,
            flexible_mismatch: mismatch,
            activation_cycle: sol.geometry.activation_cycle,
            metrics: metrics::evaluate(self.config, &sol.geometry, t1, t2, &self.options.exclude_joints),
        });
    }

    fn advance(&mut self, target: f64, emit: bool, depth: usize) -> Result<Flow> {
        let opts = &self.options.solver;
        loop {
            let sol = match solve_equilibrium(self.config, target, &self.current, opts) {
                Ok(s) => s,
                Err(e) => {
                    if depth >= self.options.max_bisections {
                        return Err(e);
                    }
                    let mid = 0.5 * (self.t_cur + target);
                    if let Flow::AllLocked = self.advance(mid, false, depth + 1)? {
                        return Ok(Flow::AllLocked);
                    }
                    continue;
                }
            };
            let limits = &self.config.finger.limits;
            let over: Vec<usize> = (0..3)
                .filter(|&j| !self.current.locked[j] && sol.state.theta[j] > limits[j] + 1e-12)
                .collect();
            if over.is_empty() {
                self.current = sol.state.clone();
                self.t_cur = target;
                if emit {
                    self.record(&sol, None);
                }
                return Ok(Flow::Continue);
            }
            let mut best: Option<(usize, Solution)> = None;
            for &j in &over {
                let lock =
                    solve_locking_tension(self.config, j, &self.current, self.t_cur, &sol.state, target, opts)?;
                let better = match &best {
                    None => true,
                    Some((_, b)) => lock.t_s < b.t_s - 1e-9,
                };
                if better {
                    best = Some((j, lock));
                }
            }
            let (joint, lock) = best.expect("at least one overshooting joint");
            self.events.push(LockEvent {
                joint,
                t_s: lock.t_s,
                theta: lock.state.theta,
                residual: lock.residual,
            });
            self.record(&lock, Some(joint));
            self.current = lock.state.clone();
            self.t_cur = lock.t_s;
            if self.current.locked.iter().all(|&l| l) {
                return Ok(Flow::AllLocked);
            }
        }
    }
}

/// Sweeps the total tension over the schedule in `options`, locking joints
/// as they reach their limits. Never fails: a numerical failure ends the
/// trace early with [`Terminal::SolverFailure`] and the error attached.
pub fn tension_sweep_with(config: &TpsConfiguration, options: &SweepOptions) -> SweepTrace {
    let mut trace = SweepTrace {
        name: config.name.clone(),
        steps: Vec::new(),
        events: Vec::new(),
        terminal: Terminal::MaxTension,
        error: None,
    };
    let initial = match geometry::resolve_geometry(config, &config.finger.neutral, None, None) {
        Ok(g) => g,
        Err(e) => {
            trace.terminal = Terminal::SolverFailure;
            trace.error = Some(e);
            return trace;
        }
    };
    let start = Solution {
        state: state_from_geometry(&initial, [false; 3], 0.0, 0.0),
        geometry: initial,
        t_s: 0.0,
        residual: 0.0,
        iterations: 0,
    };
    let mut sweeper = Sweeper {
        config,
        options,
        current: start.state.clone(),
        t_cur: 0.0,
        steps: Vec::new(),
        events: Vec::new(),
    };
    sweeper.record(&start, None);
    for &target in &options.schedule()[1..] {
        match sweeper.advance(target, true, 0) {
            Ok(Flow::Continue) => {}
            Ok(Flow::AllLocked) => {
                trace.terminal = Terminal::AllLocked;
                break;
            }
            Err(e) => {
                trace.terminal = Terminal::SolverFailure;
                trace.error = Some(e);
                break;
            }
        }
    }
    trace.steps = sweeper.steps;
    trace.events = sweeper.events;
    trace
}

/// Sweep with the configuration's own `t_max` and step count.
pub fn tension_sweep(config: &TpsConfiguration) -> SweepTrace {
    tension_sweep_with(config, &SweepOptions::from_config(config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_configuration, ParameterMap, Tendon};

    fn cfg(name: &str, kv: &[(&str, &str)]) -> TpsConfiguration {
        let map: ParameterMap = kv.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        build_configuration(name, &map).unwrap()
    }

    #[test]
    fn dogleg_solves_rosenbrock_system() {
        let opts = SolverOptions {
            tolerance: 1e-12,
            ..SolverOptions::default()
        };
        let r = dogleg(
            |x| Ok(DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]])),
            DVector::from_vec(vec![-1.2, 1.0]),
            &opts,
        )
        .unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-9);
        assert!((r.x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dogleg_reports_failure() {
        let opts = SolverOptions {
            max_iterations: 20,
            ..SolverOptions::default()
        };
        let r = dogleg(|x| Ok(DVector::from_vec(vec![x[0] * x[0] + 1.0])), DVector::from_vec(vec![3.0]), &opts);
        assert!(matches!(r, Err(TpsError::SolverNonConvergence { .. })));
    }

    #[test]
    fn schedule_with_checkpoint() {
        let o = SweepOptions {
            checkpoints: vec![5.0, 4.0],
            ..SweepOptions::uniform(8.0, 4)
        };
        assert_eq!(o.schedule(), vec![0.0, 2.0, 4.0, 5.0, 6.0, 8.0]);
    }

    /// Equilibrium is a stationary point of spring energy plus tendon work;
    /// the energy gradient by central differences is the oracle.
    #[test]
    fn equilibrium_is_energy_stationary() {
        let c = cfg("C-C-C", &[]);
        let s0 = initial_state(&c).unwrap();
        let sol = solve_equilibrium(&c, 3.0, &s0, &SolverOptions::default()).unwrap();
        assert!(sol.residual <= 1e-9);
        let energy = |theta: &[f64; 3]| {
            let f = &c.finger;
            let spring: f64 = (0..3).map(|j| 0.5 * f.stiffness[j] * (theta[j] - f.neutral[j]).powi(2)).sum();
            let l = geometry::tendon_length(&c, Tendon::Fdp, theta, &sol.state.active, &sol.state.beta, true).unwrap();
            spring + 3.0 * l
        };
        for j in 0..3 {
            let h = 1e-6;
            let mut p = sol.state.theta;
            let mut m = sol.state.theta;
            p[j] += h;
            m[j] -= h;
            let grad = (energy(&p) - energy(&m)) / (2.0 * h);
            assert!(grad.abs() < 1e-5, "joint {j}: {grad}");
        }
    }

    #[test]
    fn state_residual_vanishes_at_solution() {
        let c = cfg("C~D-C~D-C", &[("h_c", "2.0"), ("e", "10e")]);
        let s0 = initial_state(&c).unwrap();
        let sol = solve_equilibrium(&c, 4.0, &s0, &SolverOptions::default()).unwrap();
        let r = residual(&c, &sol.state).unwrap();
        let k1 = c.finger.stiffness[0];
        assert!(r.len() >= 3);
        for (k, v) in r.iter().enumerate() {
            let bound = if k < 3 { 1e-9 * k1 } else { 1e-8 };
            assert!(v.abs() <= bound, "component {k}: {v}");
        }
    }

    #[test]
    fn unloaded_sweep_stays_neutral() {
        let c = cfg("C-C-C", &[]);
        let t = tension_sweep_with(&c, &SweepOptions::uniform(0.0, 4));
        assert_eq!(t.terminal, Terminal::MaxTension);
        assert!(t.steps.iter().all(|s| s.sum_theta().abs() < 1e-12));
    }

    #[test]
    fn sweep_monotone_and_locks_in_order() {
        let c = cfg("C-C-C", &[]);
        let t = tension_sweep_with(&c, &SweepOptions::uniform(12.0, 120));
        assert!(t.error.is_none(), "{:?}", t.error);
        let mut prev_locked = [false; 3];
        for w in t.steps.windows(2) {
            assert!(w[1].t_s >= w[0].t_s - 1e-12);
            for j in 0..3 {
                assert!(!prev_locked[j] || w[1].state.locked[j]);
                assert!(w[1].state.theta[j] <= c.finger.limits[j] + 1e-9);
            }
            prev_locked = w[1].state.locked;
        }
        for e in &t.events {
            assert!(e.residual <= 1e-9);
            assert!((e.theta[e.joint] - c.finger.limits[e.joint]).abs() < 1e-12);
        }
        assert!(!t.events.is_empty());
    }
}
