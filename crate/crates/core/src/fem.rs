//! Geometrically nonlinear frame model of a single-tendon finger, used as an
//! independent check on the rigid-link model.
//!
//! Flexures and phalanges are meshed with two-node co-rotational
//! Euler-Bernoulli elements. Pulley tips are mesh nodes hanging off the
//! phalange on stiff posts, and the tendon acts on them as follower forces
//! pointing at the neighbouring string points.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::equilibrium::{tension_sweep_with, SweepOptions};
use crate::error::{Result, TpsError};
use crate::model::{per_degree_to_per_radian, per_radian_to_per_degree, PulleyKind, Tendon, TpsConfiguration};

type V2 = Vector2<f64>;

/// Section and material of one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Section {
    /// Young's modulus, MPa.
    pub modulus: f64,
    pub area: f64,
    pub inertia: f64,
}

impl Section {
    /// Rectangular `depth × thickness` section bending about the depth axis.
    pub fn rectangle(modulus: f64, depth: f64, thickness: f64) -> Self {
        Self {
            modulus,
            area: depth * thickness,
            inertia: depth * thickness.powi(3) / 12.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    /// Clamped node on the metacarpal side of the first flexure.
    Ground,
    Flexure(usize),
    Phalange(usize),
    /// Pulley tip or attachment node touched by the tendon.
    Boundary,
    /// Intermediate node on a pulley post.
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameElement {
    pub nodes: [usize; 2],
    pub section: Section,
}

/// Planar frame mesh with three degrees of freedom per node (x, y, rotation).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMesh {
    pub nodes: Vec<V2>,
    pub roles: Vec<NodeRole>,
    pub elements: Vec<FrameElement>,
    /// Nodes with all three degrees of freedom fixed.
    pub clamped: Vec<usize>,
    /// One node on each rigid phalange, used to read joint angles.
    pub phalange_nodes: Vec<usize>,
}

/// A string point: either fixed in space or attached to a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StringPoint {
    Fixed(V2),
    Node(usize),
}

/// External loading proportional to a scalar tension `T`: a tendon path whose
/// node points carry follower forces, plus fixed nodal loads per unit `T`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FollowerLoad {
    pub string: Vec<StringPoint>,
    /// `(dof, value)` pairs multiplied by `T`.
    pub nodal: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshOptions {
    pub flexure_elements: usize,
    /// Elements between consecutive stations on a phalange.
    pub segment_elements: usize,
    pub flexure_modulus: f64,
    /// Out-of-plane size of the flexure strip, mm.
    pub flexure_depth: f64,
    /// Phalange and post modulus as a multiple of the flexure modulus.
    pub rigidity_ratio: f64,
    /// In-plane thickness of phalanges and posts, mm.
    pub phalange_thickness: f64,
    pub phalange_depth: f64,
}

impl Default for MeshOptions {
    fn default() -> Self {
        Self {
            flexure_elements: 20,
            segment_elements: 3,
            flexure_modulus: VALIDATION_FLEXURE_MODULUS,
            flexure_depth: VALIDATION_FLEXURE_DEPTH,
            rigidity_ratio: 1000.0,
            phalange_thickness: 6.0,
            phalange_depth: 20.0,
        }
    }
}

pub const VALIDATION_FLEXURE_MODULUS: f64 = 9.0;
pub const VALIDATION_FLEXURE_DEPTH: f64 = 11.6;
pub const VALIDATION_FLEXURE_THICKNESS: f64 = 2.1;
pub const VALIDATION_PHALANGE_MODULUS: f64 = 2000.0;

pub fn dofs(node: usize) -> [usize; 3] {
    [3 * node, 3 * node + 1, 3 * node + 2]
}

impl FrameMesh {
    pub fn dof_count(&self) -> usize {
        3 * self.nodes.len()
    }

    fn add_node(&mut self, p: V2, role: NodeRole) -> usize {
        self.nodes.push(p);
        self.roles.push(role);
        self.nodes.len() - 1
    }

    /// Straight chain of `n` elements from an existing node to `end`.
    fn chain(&mut self, from: usize, end: V2, n: usize, section: Section, role: NodeRole) -> usize {
        let start = self.nodes[from];
        let mut prev = from;
        for k in 1..=n.max(1) {
            let p = start + (end - start) * (k as f64 / n.max(1) as f64);
            let id = self.add_node(p, role);
            self.elements.push(FrameElement {
                nodes: [prev, id],
                section,
            });
            prev = id;
        }
        prev
    }

    /// Mesh of a single-tendon, stiff-pulley configuration in its neutral
    /// pose. Each flexure gets the section whose bending stiffness over the
    /// flexure length equals the configured joint stiffness.
    pub fn from_configuration(config: &TpsConfiguration, options: &MeshOptions) -> Result<(Self, FollowerLoad)> {
        let tendon = single_tendon(config)?;
        let finger = &config.finger;
        if finger.neutral.iter().any(|t| t.abs() > 1e-12) {
            return Err(TpsError::Unsupported("frame model needs a straight neutral pose".into()));
        }
        let lf = finger.flexure_length;
        let flexure = |j: usize| -> Section {
            let inertia = per_degree_to_per_radian(finger.stiffness_per_degree()[j]) * lf / options.flexure_modulus;
            let thickness = (12.0 * inertia / options.flexure_depth).cbrt();
            Section::rectangle(options.flexure_modulus, options.flexure_depth, thickness)
        };
        let rigid = Section::rectangle(
            options.flexure_modulus * options.rigidity_ratio,
            options.phalange_depth,
            options.phalange_thickness,
        );

        let mut mesh = FrameMesh {
            nodes: Vec::new(),
            roles: Vec::new(),
            elements: Vec::new(),
            clamped: Vec::new(),
            phalange_nodes: Vec::new(),
        };
        let joints = [0.0, finger.lengths[0], finger.lengths[0] + finger.lengths[1]];
        let route = config.route(tendon).expect("tendon present");
        let mut tip_nodes = vec![None::<(usize, Option<usize>)>; config.pulleys.len()];

        let ground = mesh.add_node(V2::new(-0.5 * lf, 0.0), NodeRole::Ground);
        mesh.clamped.push(ground);
        let mut last = ground;
        for p in 0..3 {
            last = mesh.chain(
                last,
                V2::new(joints[p] + 0.5 * lf, 0.0),
                options.flexure_elements,
                flexure(p),
                NodeRole::Flexure(p),
            );
            let end = if p < 2 { joints[p + 1] - 0.5 * lf } else { joints[2] + finger.lengths[2] };
            let mut stations: Vec<(f64, Option<usize>)> = route
                .points
                .iter()
                .copied()
                .filter(|&i| config.pulleys[i].phalange == p + 1)
                .map(|i| (joints[p] + config.pulleys[i].x, Some(i)))
                .collect();
            stations.push((end, None));
            stations.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (x, pulley) in stations {
                let here = mesh.nodes[last].x;
                if x > here + 1e-9 {
                    last = mesh.chain(last, V2::new(x, 0.0), options.segment_elements, rigid, NodeRole::Phalange(p));
                } else if x < here - 1e-9 {
                    return Err(TpsError::Unsupported(format!(
                        "point at {x:.2} mm lies inside a flexure"
                    )));
                }
                if let Some(i) = pulley {
                    tip_nodes[i] = Some(mesh.add_post(last, &config.pulleys[i], finger.half_widths[p], rigid, options));
                }
            }
            mesh.phalange_nodes.push(last);
        }

        let mut string = vec![StringPoint::Fixed(V2::new(finger.ground.re, finger.ground.im))];
        for &i in &route.points {
            if config.pulleys[i].kind == PulleyKind::Ground {
                continue;
            }
            let (q, s) = tip_nodes[i].ok_or_else(|| TpsError::Fem(format!("{} was not meshed", config.pulleys[i].label)))?;
            string.push(StringPoint::Node(q));
            if let Some(s) = s {
                string.push(StringPoint::Node(s));
            }
        }
        Ok((mesh, FollowerLoad { string, nodal: Vec::new() }))
    }

    /// Stiff post from a phalange node down to the tip; returns the proximal
    /// and (for a pulley of nonzero width) distal tip nodes.
    fn add_post(
        &mut self,
        base: usize,
        pulley: &crate::model::PulleySpec,
        half_width: f64,
        section: Section,
        options: &MeshOptions,
    ) -> (usize, Option<usize>) {
        let x = self.nodes[base].x;
        let depth = half_width + pulley.height;
        let tip = V2::new(x, -depth);
        let n = options.segment_elements;
        if pulley.width <= 0.0 || pulley.kind == PulleyKind::Attachment {
            let id = self.chain(base, tip, n, section, NodeRole::Post);
            self.roles[id] = NodeRole::Boundary;
            return (id, None);
        }
        let centre = self.chain(base, tip, n, section, NodeRole::Post);
        let half = 0.5 * pulley.width;
        let q = self.chain(centre, V2::new(x - half, -depth), 1, section, NodeRole::Boundary);
        let s = self.chain(centre, V2::new(x + half, -depth), 1, section, NodeRole::Boundary);
        (q, Some(s))
    }

    /// Current position of a node.
    pub fn position(&self, node: usize, u: &DVector<f64>) -> V2 {
        let [dx, dy, _] = dofs(node);
        self.nodes[node] + V2::new(u[dx], u[dy])
    }

    /// Joint angles (flexion positive) read from the phalange rotations.
    pub fn joint_angles(&self, u: &DVector<f64>) -> Vec<f64> {
        let mut prev = 0.0;
        self.phalange_nodes
            .iter()
            .map(|&n| {
                let rot = -u[dofs(n)[2]];
                let theta = rot - prev;
                prev = rot;
                theta
            })
            .collect()
    }

    /// Free degrees of freedom, in ascending order.
    pub fn free_dofs(&self) -> Vec<usize> {
        let mut fixed = vec![false; self.dof_count()];
        for &n in &self.clamped {
            for d in dofs(n) {
                fixed[d] = true;
            }
        }
        (0..self.dof_count()).filter(|&d| !fixed[d]).collect()
    }
}

fn single_tendon(config: &TpsConfiguration) -> Result<Tendon> {
    if config.routes.len() != 1 {
        return Err(TpsError::Unsupported(format!(
            "{}: frame model supports a single tendon",
            config.name
        )));
    }
    if config.pulleys.iter().any(|p| p.kind == PulleyKind::Flexible) {
        return Err(TpsError::Unsupported(format!(
            "{}: frame model supports stiff pulleys only",
            config.name
        )));
    }
    let tendon = config.routes[0].tendon;
    let mut per_phalange = [0usize; 4];
    for &i in &config.routes[0].points {
        let p = &config.pulleys[i];
        if p.kind == PulleyKind::Stiff {
            per_phalange[p.phalange] += 1;
        }
    }
    if per_phalange.iter().any(|&n| n > 1) {
        return Err(TpsError::Unsupported(format!(
            "{}: frame model supports one pulley per phalange",
            config.name
        )));
    }
    Ok(tendon)
}

fn wrap(a: f64) -> f64 {
    let r = a.rem_euclid(std::f64::consts::TAU);
    if r > std::f64::consts::PI {
        r - std::f64::consts::TAU
    } else {
        r
    }
}

/// Internal force vector and material plus geometric tangent.
pub fn assemble_internal(mesh: &FrameMesh, u: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = mesh.dof_count();
    let mut f = DVector::zeros(n);
    let mut k = DMatrix::zeros(n, n);
    for (e, el) in mesh.elements.iter().enumerate() {
        let [a, b] = el.nodes;
        let x0 = mesh.nodes[b] - mesh.nodes[a];
        let l0 = x0.norm();
        let [ua, ub] = [a, b].map(|n| V2::new(u[dofs(n)[0]], u[dofs(n)[1]]));
        let du = ub - ua;
        let d = x0 + du;
        let l = d.norm();
        if l < 1e-9 * l0.max(1.0) {
            return Err(TpsError::Fem(format!("element {e} collapsed")));
        }
        let (c, s) = (d.x / l, d.y / l);
        let alpha = (x0.x * d.y - x0.y * d.x).atan2(x0.dot(&d));
        let idx: Vec<usize> = dofs(a).into_iter().chain(dofs(b)).collect();
        let t1 = wrap(u[idx[2]] - alpha);
        let t2 = wrap(u[idx[5]] - alpha);
        let Section { modulus, area, inertia } = el.section;
        let ea = modulus * area / l0;
        let ei = modulus * inertia / l0;
        // stretch without cancellation between l and l0
        let axial = ea * (2.0 * x0.dot(&du) + du.norm_squared()) / (l + l0);
        let m1 = ei * (4.0 * t1 + 2.0 * t2);
        let m2 = ei * (2.0 * t1 + 4.0 * t2);

        let r = [-c, -s, 0.0, c, s, 0.0];
        let z = [s, -c, 0.0, -s, c, 0.0];
        let b1: [f64; 6] = std::array::from_fn(|i| -z[i] / l + if i == 2 { 1.0 } else { 0.0 });
        let b2: [f64; 6] = std::array::from_fn(|i| -z[i] / l + if i == 5 { 1.0 } else { 0.0 });
        for i in 0..6 {
            f[idx[i]] += axial * r[i] + m1 * b1[i] + m2 * b2[i];
            for j in 0..6 {
                let material = ea * r[i] * r[j]
                    + ei * (4.0 * b1[i] * b1[j] + 2.0 * (b1[i] * b2[j] + b2[i] * b1[j]) + 4.0 * b2[i] * b2[j]);
                let geometric = axial * z[i] * z[j] / l + (m1 + m2) * (r[i] * z[j] + z[i] * r[j]) / (l * l);
                k[(idx[i], idx[j])] += material + geometric;
            }
        }
    }
    Ok((f, k))
}

/// External force at tension `t` and its derivative with respect to `u`.
pub fn assemble_follower(
    mesh: &FrameMesh,
    load: &FollowerLoad,
    t: f64,
    u: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = mesh.dof_count();
    let mut f = DVector::zeros(n);
    let mut k = DMatrix::zeros(n, n);
    for &(dof, v) in &load.nodal {
        f[dof] += t * v;
    }
    let at = |p: StringPoint| match p {
        StringPoint::Fixed(x) => x,
        StringPoint::Node(i) => mesh.position(i, u),
    };
    for (idx, &point) in load.string.iter().enumerate() {
        let StringPoint::Node(node) = point else {
            continue;
        };
        let x = at(point);
        let [nx, ny, _] = dofs(node);
        let neighbours = [idx.checked_sub(1), Some(idx + 1).filter(|&i| i < load.string.len())];
        for other in neighbours.into_iter().flatten() {
            let y = at(load.string[other]);
            let v = y - x;
            let len = v.norm();
            if len < 1e-12 {
                return Err(TpsError::Fem("coincident string points".into()));
            }
            let e = v / len;
            f[nx] += t * e.x;
            f[ny] += t * e.y;
            let p: Matrix2<f64> = (Matrix2::identity() - e * e.transpose()) * (t / len);
            for (r, row) in [nx, ny].into_iter().enumerate() {
                for cc in 0..2 {
                    k[(row, dofs(node)[cc])] -= p[(r, cc)];
                }
                if let StringPoint::Node(m) = load.string[other] {
                    for cc in 0..2 {
                        k[(row, dofs(m)[cc])] += p[(r, cc)];
                    }
                }
            }
        }
    }
    Ok((f, k))
}

/// Residual `g = f_int − f_ext` and tangent `∂g/∂u` over all degrees of freedom.
pub fn residual_and_tangent(
    mesh: &FrameMesh,
    load: &FollowerLoad,
    t: f64,
    u: &DVector<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let (fi, ki) = assemble_internal(mesh, u)?;
    let (fe, ke) = assemble_follower(mesh, load, t, u)?;
    Ok((fi - fe, ki - ke))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    /// Convergence when `‖g‖∞ ≤ tolerance · max(1, T)`.
    pub tolerance: f64,
    pub max_bisections: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-8,
            max_bisections: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FemStep {
    pub tension: f64,
    pub u: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Residual norms of the Newton iterates, first to last.
    pub history: Vec<f64>,
}

fn newton(mesh: &FrameMesh, load: &FollowerLoad, t: f64, start: &DVector<f64>, opts: &NewtonOptions) -> Result<FemStep> {
    let free = mesh.free_dofs();
    let mut u = start.clone();
    let target = opts.tolerance * t.abs().max(1.0);
    let mut history = Vec::new();
    let mut last_step = f64::INFINITY;
    for it in 0..=opts.max_iterations {
        let (g, k) = residual_and_tangent(mesh, load, t, &u)?;
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&d| g[d]));
        let norm = gf.amax();
        history.push(norm);
        if !norm.is_finite() {
            break;
        }
        // a vanishing Newton update means the residual sits at round-off level
        let stalled = last_step <= 1e-10 * u.amax().max(1.0) && norm <= 1e3 * target;
        if norm <= target || stalled {
            return Ok(FemStep {
                tension: t,
                u,
                iterations: it,
                residual: norm,
                history,
            });
        }
        if it == opts.max_iterations {
            break;
        }
        let kf = DMatrix::from_fn(free.len(), free.len(), |i, j| k[(free[i], free[j])]);
        let Some(du) = kf.lu().solve(&(-gf)) else {
            break;
        };
        for (i, &d) in free.iter().enumerate() {
            u[d] += du[i];
        }
        last_step = du.amax();
    }
    Err(TpsError::Fem(format!(
        "Newton did not converge at T = {t:.6} N (residual {:.3e})",
        history.last().copied().unwrap_or(f64::NAN)
    )))
}

/// Equilibria along a monotone tension schedule, warm-started from step to
/// step. A failed step is approached through halved increments.
pub fn newton_solve(
    mesh: &FrameMesh,
    load: &FollowerLoad,
    schedule: &[f64],
    opts: &NewtonOptions,
) -> Result<Vec<FemStep>> {
    if schedule.windows(2).any(|w| w[1] < w[0]) {
        return Err(TpsError::Fem("tension schedule must be non-decreasing".into()));
    }
    let mut out: Vec<FemStep> = Vec::with_capacity(schedule.len());
    let mut u = DVector::zeros(mesh.dof_count());
    let mut t_prev = 0.0;
    for &t in schedule {
        let step = advance(mesh, load, t_prev, t, &u, opts, 0)?;
        u = step.u.clone();
        t_prev = t;
        out.push(step);
    }
    Ok(out)
}

fn advance(
    mesh: &FrameMesh,
    load: &FollowerLoad,
    t0: f64,
    t1: f64,
    u0: &DVector<f64>,
    opts: &NewtonOptions,
    depth: usize,
) -> Result<FemStep> {
    match newton(mesh, load, t1, u0, opts) {
        Ok(s) => Ok(s),
        Err(e) if depth >= opts.max_bisections => Err(e),
        Err(_) => {
            let mid = 0.5 * (t0 + t1);
            let half = advance(mesh, load, t0, mid, u0, opts, depth + 1)?;
            advance(mesh, load, mid, t1, &half.u, opts, depth + 1)
        }
    }
}

/// Bending stiffness of a single flexure measured on the frame model: a
/// clamped flexure carrying a stiff lever is loaded by a small end moment.
/// Returns N·mm/deg.
pub fn equivalent_stiffness(flexure: Section, length: f64, options: &MeshOptions) -> Result<f64> {
    let rigid = Section::rectangle(
        flexure.modulus * options.rigidity_ratio,
        options.phalange_depth,
        options.phalange_thickness,
    );
    let mut mesh = FrameMesh {
        nodes: Vec::new(),
        roles: Vec::new(),
        elements: Vec::new(),
        clamped: Vec::new(),
        phalange_nodes: Vec::new(),
    };
    let root = mesh.add_node(V2::zeros(), NodeRole::Ground);
    mesh.clamped.push(root);
    let end = mesh.chain(root, V2::new(length, 0.0), options.flexure_elements, flexure, NodeRole::Flexure(0));
    let tip = mesh.chain(end, V2::new(length + 10.0, 0.0), options.segment_elements, rigid, NodeRole::Phalange(0));
    mesh.phalange_nodes.push(tip);
    let moment = 1e-3;
    let load = FollowerLoad {
        string: Vec::new(),
        nodal: vec![(dofs(tip)[2], moment)],
    };
    let step = newton_solve(&mesh, &load, &[1.0], &NewtonOptions::default())?.pop().expect("one step");
    let rotation = step.u[dofs(end)[2]];
    Ok(per_radian_to_per_degree(moment / rotation))
}

/// Flexure section of the physical validation prototype at a given strip
/// thickness.
pub fn validation_flexure(thickness: f64) -> Section {
    Section::rectangle(VALIDATION_FLEXURE_MODULUS, VALIDATION_FLEXURE_DEPTH, thickness)
}

/// Mesh options matching the validation prototype.
pub fn validation_mesh_options() -> MeshOptions {
    MeshOptions {
        flexure_modulus: VALIDATION_FLEXURE_MODULUS,
        flexure_depth: VALIDATION_FLEXURE_DEPTH,
        rigidity_ratio: VALIDATION_PHALANGE_MODULUS / VALIDATION_FLEXURE_MODULUS,
        phalange_thickness: 6.0,
        phalange_depth: 20.0,
        ..MeshOptions::default()
    }
}

/// Rigid-link counterpart of the validation prototype: one central pulley per
/// phalange, tip 7.5 mm below the bone axis, guide at (-10, -7.5) mm and joint
/// stiffness equal to the measured flexure stiffness.
pub fn validation_configuration(name: &str, thickness: f64) -> Result<TpsConfiguration> {
    let lf = crate::model::FingerModel::index_finger().flexure_length;
    let k = equivalent_stiffness(validation_flexure(thickness), lf, &validation_mesh_options())?;
    let mut map = crate::model::ParameterMap::new();
    for key in ["k1", "k2", "k3"] {
        map.insert(key.into(), format!("{k}"));
    }
    for (key, value) in [("h_a", "4.0"), ("h_tap", "4.0"), ("xg", "-10.0"), ("yg", "-7.5")] {
        map.insert(key.into(), value.into());
    }
    crate::model::build_configuration(name, &map)
}

/// One matched point of the two tension-flexion curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    /// Total flexion, degrees.
    pub sum_deg: f64,
    pub t_prbm: f64,
    pub t_fem: f64,
    pub rel_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FemComparison {
    pub rows: Vec<ComparisonRow>,
}

impl FemComparison {
    /// Largest relative tension gap over rows with `sum_deg ≤ limit`.
    pub fn max_gap_below(&self, limit: f64) -> f64 {
        self.rows
            .iter()
            .filter(|r| r.sum_deg <= limit)
            .map(|r| r.rel_gap)
            .fold(0.0, f64::max)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("sum_deg,T_prbm,T_fem,rel_gap\n");
        for r in &self.rows {
            s.push_str(&format!("{:.3},{:.6},{:.6},{:.6}\n", r.sum_deg, r.t_prbm, r.t_fem, r.rel_gap));
        }
        s
    }
}

/// Solves the frame model along `schedule` and, for each step, finds the
/// rigid-link tension giving the same total flexion.
pub fn compare_with_prbm(
    config: &TpsConfiguration,
    schedule: &[f64],
    mesh_options: &MeshOptions,
    newton_options: &NewtonOptions,
) -> Result<FemComparison> {
    let (mesh, load) = FrameMesh::from_configuration(config, mesh_options)?;
    let fem = newton_solve(&mesh, &load, schedule, newton_options)?;
    let t_end = schedule.last().copied().unwrap_or(0.0);
    let mut rows = Vec::new();
    if t_end <= 0.0 {
        return Ok(FemComparison {
            rows: vec![ComparisonRow {
                sum_deg: 0.0,
                t_prbm: 0.0,
                t_fem: 0.0,
                rel_gap: 0.0,
            }],
        });
    }
    // the rigid-link sweep runs well past the frame tension so every frame
    // posture has a match
    let mut sweep = SweepOptions::uniform(4.0 * t_end, 800);
    sweep.checkpoints = schedule.to_vec();
    let trace = tension_sweep_with(config, &sweep);
    if let Some(e) = trace.error.clone() {
        if trace.steps.len() < 2 {
            return Err(e);
        }
    }
    for step in &fem {
        let sum: f64 = mesh.joint_angles(&step.u).iter().sum();
        if sum <= 1e-9 {
            continue;
        }
        let Some(t_prbm) = trace.tension_for_sum(sum) else {
            continue;
        };
        if trace.steps.last().map(|s| s.state.sum_theta()).unwrap_or(0.0) < sum - 1e-9 {
            continue;
        }
        rows.push(ComparisonRow {
            sum_deg: sum.to_degrees(),
            t_prbm,
            t_fem: step.tension,
            rel_gap: (step.tension - t_prbm).abs() / t_prbm,
        });
    }
    Ok(FemComparison { rows })
}
