//! Adaptive quadtree FMM for one canonical kernel.
//!
//! Sources and targets get separate trees over squares of equal side. Both
//! trees live in the canonical frame: a target at height `y` sits at
//! `a = τy + d` and a source at `y0` sits at `b = s y0`, so every kernel looks
//! like a free-space kernel with all targets above all sources and the
//! modified distance is the ordinary distance between boxes. The target tree
//! grows up from `min a`, the source tree grows down from `max b`, which keeps
//! `a_c − b_c > 0` for every pair of box centres.
//!
//! Interactions come from a dual-tree traversal. A pair of boxes is handled by
//! M2L when `ρ ≥ 2 (R_T + R_S)` with `ρ` the canonical centre distance and `R`
//! the half-diagonals. Otherwise the larger box is split, and pairs of leaves
//! that still fail the test are summed directly. Image and layered kernels
//! whose sources and targets are far from the interface therefore never
//! reach the direct sum.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::expansions::{estimate_order, l2t, s2m, LocalExpansion, ModifiedDistance, MultipoleExpansion, Point2};
use crate::greens::{Family, KernelSpec};
use crate::sommerfeld::{eval_kernel, EvalRequest};
use crate::special_functions::hankel1;
use crate::translations::{l2l, m2l_apply, m2l_free_space, m2l_matrix, m2m, M2LCache, M2LKey};
use num_complex::Complex64;
use rayon::prelude::*;

/// Deepest tree level. Boxes at this level are leaves whatever they hold.
pub const MAX_LEVEL: u32 = 40;
/// Largest `N·M` accepted by [`direct_sum`].
pub const DIRECT_SUM_LIMIT: usize = 10_000_000;
/// Admissibility ratio `ρ / (R_T + R_S)` for M2L.
pub const MAC_RATIO: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub position: Point2,
    pub charge: Complex64,
}

#[derive(Debug, Clone)]
pub struct ConvolveJob {
    pub spec: KernelSpec,
    pub sources: Vec<Particle>,
    pub targets: Vec<Point2>,
    pub tol: f64,
    pub max_leaf: usize,
    /// Expansion order used at every level instead of the estimate.
    pub order: Option<usize>,
    /// Bound on stored M2L matrices, in bytes.
    pub m2l_cache_bytes: Option<usize>,
}

impl ConvolveJob {
    pub fn new(spec: KernelSpec, sources: Vec<Particle>, targets: Vec<Point2>, tol: f64) -> Self {
        ConvolveJob { spec, sources, targets, tol, max_leaf: 30, order: None, m2l_cache_bytes: None }
    }
}

#[derive(Debug, Clone)]
pub struct BoxNode {
    pub level: u32,
    pub center: Point2,
    pub half_width: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Range into [`QuadTree::order`].
    pub start: usize,
    pub end: usize,
    /// Centre on the integer grid of spacing `side / 2^(MAX_LEVEL+1)`.
    pub grid: [i64; 2],
}

impl BoxNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    /// Half-diagonal.
    pub fn radius(&self) -> f64 {
        self.half_width * std::f64::consts::SQRT_2
    }
}

#[derive(Debug, Clone)]
pub struct QuadTree {
    pub nodes: Vec<BoxNode>,
    /// Point indices, grouped so that each box owns a contiguous range.
    pub order: Vec<usize>,
    pub points: Vec<Point2>,
    /// Lower-left corner and side of the root square.
    pub origin: Point2,
    pub side: f64,
    /// Box indices per level.
    pub levels: Vec<Vec<usize>>,
}

impl QuadTree {
    pub fn root(&self) -> &BoxNode {
        &self.nodes[0]
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf())
    }

    pub fn box_points(&self, b: usize) -> &[usize] {
        let n = &self.nodes[b];
        &self.order[n.start..n.end]
    }
}

/// Adaptive quadtree over the smallest square centred on the bounding box.
pub fn build_tree(points: &[Point2], max_leaf: usize) -> Result<QuadTree> {
    let (lo, hi) = bounds(points)?;
    let side = square_side(hi[0] - lo[0], hi[1] - lo[1]);
    let origin = [(lo[0] + hi[0] - side) / 2.0, (lo[1] + hi[1] - side) / 2.0];
    build_tree_in(points, max_leaf, origin, side)
}

fn bounds(points: &[Point2]) -> Result<(Point2, Point2)> {
    if points.is_empty() {
        return Err(Error::Domain("tree needs at least one point".into()));
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(Error::Domain(format!("non-finite point {p:?}")));
        }
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    Ok((lo, hi))
}

/// Side slightly larger than the extent so that no point sits on the far edge.
fn square_side(wx: f64, wy: f64) -> f64 {
    let w = wx.max(wy);
    if w > 0.0 {
        w * (1.0 + 1e-12)
    } else {
        1.0
    }
}

/// Adaptive quadtree over the square `[origin, origin + side]²`.
pub fn build_tree_in(points: &[Point2], max_leaf: usize, origin: Point2, side: f64) -> Result<QuadTree> {
    if max_leaf == 0 {
        return Err(Error::Domain("max_leaf must be at least 1".into()));
    }
    if points.is_empty() {
        return Err(Error::Domain("tree needs at least one point".into()));
    }
    let mut tree = QuadTree {
        nodes: Vec::new(),
        order: (0..points.len()).collect(),
        points: points.to_vec(),
        origin,
        side,
        levels: Vec::new(),
    };
    let root = BoxNode {
        level: 0,
        center: [origin[0] + side / 2.0, origin[1] + side / 2.0],
        half_width: side / 2.0,
        parent: None,
        children: Vec::new(),
        start: 0,
        end: points.len(),
        grid: [1i64 << MAX_LEVEL, 1i64 << MAX_LEVEL],
    };
    tree.nodes.push(root);
    let mut frontier = vec![0usize];
    while !frontier.is_empty() {
        tree.levels.push(frontier.clone());
        let mut next = Vec::new();
        for b in frontier {
            if tree.nodes[b].len() > max_leaf && tree.nodes[b].level < MAX_LEVEL && !all_coincident(&tree, b) {
                split(&mut tree, b);
                next.extend_from_slice(&tree.nodes[b].children);
            }
        }
        frontier = next;
    }
    Ok(tree)
}

fn all_coincident(tree: &QuadTree, b: usize) -> bool {
    let idx = tree.box_points(b);
    let first = tree.points[idx[0]];
    idx.iter().all(|&i| tree.points[i] == first)
}

fn split(tree: &mut QuadTree, b: usize) {
    let node = tree.nodes[b].clone();
    let c = node.center;
    let quadrant = |p: &Point2| (p[0] >= c[0]) as usize + 2 * (p[1] >= c[1]) as usize;
    let slice = &mut tree.order[node.start..node.end];
    let points = &tree.points;
    // Stable grouping by quadrant (SW, SE, NW, NE).
    slice.sort_by_key(|&i| quadrant(&points[i]));
    let h = node.half_width / 2.0;
    let step = 1i64 << (MAX_LEVEL - node.level - 1);
    let mut start = node.start;
    for q in 0..4 {
        let count = tree.order[start..node.end].iter().take_while(|&&i| quadrant(&tree.points[i]) == q).count();
        if count == 0 {
            continue;
        }
        let (sx, sy) = ((q % 2) as f64 * 2.0 - 1.0, (q / 2) as f64 * 2.0 - 1.0);
        let child = BoxNode {
            level: node.level + 1,
            center: [c[0] + sx * h, c[1] + sy * h],
            half_width: h,
            parent: Some(b),
            children: Vec::new(),
            start,
            end: start + count,
            grid: [node.grid[0] + sx as i64 * step, node.grid[1] + sy as i64 * step],
        };
        let id = tree.nodes.len();
        tree.nodes.push(child);
        tree.nodes[b].children.push(id);
        start += count;
    }
}

/// Expansion order for each level.
pub fn level_orders(side: f64, depth: usize, spec: &KernelSpec, tol: f64, fixed: Option<usize>) -> Result<Vec<usize>> {
    (0..=depth)
        .map(|l| {
            if let Some(p) = fixed {
                return Ok(p);
            }
            let r = side / 2f64.powi(l as i32) * std::f64::consts::FRAC_1_SQRT_2;
            if r == 0.0 {
                return estimate_order(0.5, ModifiedDistance { rho: 1.0 }, tol, 0.0);
            }
            // Worst admissible pair: equal boxes at ρ = 2(R_T + R_S).
            estimate_order(2.0 * r, ModifiedDistance { rho: 2.0 * MAC_RATIO * r }, tol, spec.k_max())
        })
        .collect()
}

/// The canonical frame of one kernel.
#[derive(Debug, Clone, Copy)]
struct Frame {
    spec: KernelSpec,
}

impl Frame {
    fn target(&self, p: Point2) -> Point2 {
        [p[0], self.spec.target_height(p[1])]
    }

    fn source(&self, p: Point2) -> Point2 {
        [p[0], self.spec.source_height(p[1])]
    }

    /// Physical centre of a target box with canonical centre `c`.
    fn target_physical(&self, c: Point2) -> Point2 {
        [c[0], self.spec.orientation as f64 * (c[1] - self.spec.offset_d)]
    }

    fn source_physical(&self, c: Point2) -> Point2 {
        [c[0], self.spec.sign as f64 * c[1]]
    }
}

/// Interaction lists from the dual-tree traversal.
#[derive(Debug, Clone, Default)]
pub struct Interactions {
    /// Source boxes translated by M2L, per target box.
    pub far: Vec<Vec<usize>>,
    /// Source leaves summed directly, per target leaf.
    pub near: Vec<Vec<usize>>,
}

/// Source and target trees with the traversal that couples them.
#[derive(Debug, Clone)]
pub struct FmmPlan {
    pub spec: KernelSpec,
    pub sources: QuadTree,
    pub targets: QuadTree,
    pub interactions: Interactions,
    pub target_orders: Vec<usize>,
    pub source_orders: Vec<usize>,
}

fn admissible(t: &BoxNode, s: &BoxNode) -> bool {
    let rho = (t.center[0] - s.center[0]).hypot(t.center[1] - s.center[1]);
    rho >= MAC_RATIO * (t.radius() + s.radius())
}

/// Dual-tree traversal.
pub fn interactions(targets: &QuadTree, sources: &QuadTree) -> Interactions {
    let mut out = Interactions { far: vec![Vec::new(); targets.nodes.len()], near: vec![Vec::new(); targets.nodes.len()] };
    let mut stack = vec![(0usize, 0usize)];
    while let Some((t, s)) = stack.pop() {
        let (tn, sn) = (&targets.nodes[t], &sources.nodes[s]);
        if admissible(tn, sn) {
            out.far[t].push(s);
            continue;
        }
        match (tn.is_leaf(), sn.is_leaf()) {
            (true, true) => out.near[t].push(s),
            (false, true) => stack.extend(tn.children.iter().rev().map(|&c| (c, s))),
            (true, false) => stack.extend(sn.children.iter().rev().map(|&c| (t, c))),
            (false, false) => {
                if tn.half_width > sn.half_width {
                    stack.extend(tn.children.iter().rev().map(|&c| (c, s)));
                } else if sn.half_width > tn.half_width {
                    stack.extend(sn.children.iter().rev().map(|&c| (t, c)));
                } else {
                    for &ct in tn.children.iter().rev() {
                        for &cs in sn.children.iter().rev() {
                            stack.push((ct, cs));
                        }
                    }
                }
            }
        }
    }
    out
}

fn check_job(job: &ConvolveJob) -> Result<()> {
    if job.sources.is_empty() {
        return Err(Error::Domain("no sources".into()));
    }
    if job.targets.is_empty() {
        return Err(Error::Domain("no targets".into()));
    }
    if !(job.tol > 0.0 && job.tol < 1.0) {
        return Err(Error::Domain(format!("tolerance must lie in (0, 1), got {}", job.tol)));
    }
    for p in &job.sources {
        if !(p.position[0].is_finite() && p.position[1].is_finite()) {
            return Err(Error::Domain(format!("non-finite source {:?}", p.position)));
        }
        job.spec.check_source(p.position[1])?;
    }
    for x in &job.targets {
        if !(x[0].is_finite() && x[1].is_finite()) {
            return Err(Error::Domain(format!("non-finite target {x:?}")));
        }
        job.spec.check_target(x[1])?;
    }
    Ok(())
}

/// Builds both trees and the interaction lists for a job.
pub fn plan(job: &ConvolveJob) -> Result<FmmPlan> {
    check_job(job)?;
    let spec = job.spec;
    let frame = Frame { spec };
    let tp: Vec<Point2> = job.targets.iter().map(|&x| frame.target(x)).collect();
    let sp: Vec<Point2> = job.sources.iter().map(|p| frame.source(p.position)).collect();
    let (tlo, thi) = bounds(&tp)?;
    let (slo, shi) = bounds(&sp)?;
    let xlo = tlo[0].min(slo[0]);
    let xhi = thi[0].max(shi[0]);
    let (targets, sources) = if spec.family == Family::FreeSpace {
        let lo = [xlo, tlo[1].min(slo[1])];
        let hi = [xhi, thi[1].max(shi[1])];
        let side = square_side(hi[0] - lo[0], hi[1] - lo[1]);
        let origin = [(lo[0] + hi[0] - side) / 2.0, (lo[1] + hi[1] - side) / 2.0];
        (build_tree_in(&tp, job.max_leaf, origin, side)?, build_tree_in(&sp, job.max_leaf, origin, side)?)
    } else {
        if tlo[1] < shi[1] {
            return Err(Error::Geometry(format!(
                "lowest target height {} is below highest source height {} in the canonical frame",
                tlo[1], shi[1]
            )));
        }
        let side = square_side(xhi - xlo, (thi[1] - tlo[1]).max(shi[1] - slo[1]));
        let xo = (xlo + xhi - side) / 2.0;
        (
            build_tree_in(&tp, job.max_leaf, [xo, tlo[1]], side)?,
            build_tree_in(&sp, job.max_leaf, [xo, shi[1] - side], side)?,
        )
    };
    let interactions = interactions(&targets, &sources);
    let accuracy = job.tol / 10.0;
    let target_orders = level_orders(targets.side, targets.depth(), &spec, accuracy, job.order)?;
    let source_orders = level_orders(sources.side, sources.depth(), &spec, accuracy, job.order)?;
    Ok(FmmPlan { spec, sources, targets, interactions, target_orders, source_orders })
}

/// Multipole expansions of every source box, about its physical centre.
pub fn upward_pass(plan: &FmmPlan, charges: &[Complex64], physical: &[Point2]) -> Result<Vec<MultipoleExpansion>> {
    let tree = &plan.sources;
    let frame = Frame { spec: plan.spec };
    let k0 = plan.spec.k_source;
    let mut out: Vec<Option<MultipoleExpansion>> = vec![None; tree.nodes.len()];
    for level in (0..tree.levels.len()).rev() {
        let order = plan.source_orders[level];
        let built: Vec<Result<(usize, MultipoleExpansion)>> = tree.levels[level]
            .par_iter()
            .map(|&b| {
                let node = &tree.nodes[b];
                let center = frame.source_physical(node.center);
                let m = if node.is_leaf() {
                    let parts: Vec<(Point2, Complex64)> =
                        tree.box_points(b).iter().map(|&i| (physical[i], charges[i])).collect();
                    s2m(&parts, center, k0, order)?
                } else {
                    let mut acc = MultipoleExpansion::zero(center, k0, order);
                    for &c in &node.children {
                        acc.add_assign(&m2m(out[c].as_ref().unwrap(), center, order)?);
                    }
                    acc
                };
                Ok((b, m))
            })
            .collect();
        for r in built {
            let (b, m) = r?;
            out[b] = Some(m);
        }
    }
    Ok(out.into_iter().map(Option::unwrap).collect())
}

fn m2l_tolerance(tol: f64) -> f64 {
    (tol * 1e-3).clamp(1e-13, 1e-8)
}

/// Local expansions of every target box that receives far-field
/// contributions, either directly or from an ancestor.
pub fn downward_pass(plan: &FmmPlan, multipoles: &[MultipoleExpansion], cache: &M2LCache, tol: f64) -> Result<Vec<Option<LocalExpansion>>> {
    let tree = &plan.targets;
    let spec = plan.spec;
    let frame = Frame { spec };
    let free = spec.family == Family::FreeSpace;
    let qtol = m2l_tolerance(tol);
    let mut out: Vec<Option<LocalExpansion>> = vec![None; tree.nodes.len()];
    for level in 0..tree.levels.len() {
        let order = plan.target_orders[level];
        // Each matrix is built from the first box pair that needs it in tree
        // order, so results do not depend on scheduling.
        let mut reps: HashMap<M2LKey, (Point2, Point2)> = HashMap::new();
        if !free {
            for &b in &tree.levels[level] {
                let node = &tree.nodes[b];
                for &s in &plan.interactions.far[b] {
                    let m = &multipoles[s];
                    let key = M2LKey::new(&spec, node.grid, plan.sources.nodes[s].grid, order, m.order);
                    reps.entry(key).or_insert((m.center, frame.target_physical(node.center)));
                }
            }
        }
        let build = |key: &M2LKey| {
            let (sc, tc) = reps[key];
            m2l_matrix(&spec, sc, tc, key.p, key.q, qtol)
        };
        let built: Vec<Result<(usize, Option<LocalExpansion>)>> = tree.levels[level]
            .par_iter()
            .map(|&b| {
                let node = &tree.nodes[b];
                let center = frame.target_physical(node.center);
                let mut local = match node.parent.and_then(|p| out[p].as_ref()) {
                    Some(parent) => Some(l2l(parent, center, order)?),
                    None => None,
                };
                for &s in &plan.interactions.far[b] {
                    let m = &multipoles[s];
                    let contribution = if free {
                        m2l_free_space(m, center, order)?
                    } else {
                        let sn = &plan.sources.nodes[s];
                        let key = M2LKey::new(&spec, node.grid, sn.grid, order, m.order);
                        let a = cache.get_or_try_insert(key, || build(&key))?;
                        let mut l = m2l_apply(&a, m)?;
                        l.center = center;
                        l
                    };
                    match local.as_mut() {
                        Some(l) => l.add_assign(&contribution),
                        None => local = Some(contribution),
                    }
                }
                Ok((b, local))
            })
            .collect();
        for r in built {
            let (b, l) = r?;
            out[b] = l;
        }
    }
    Ok(out)
}

fn s2t_tolerance(tol: f64) -> f64 {
    (tol * 1e-3).clamp(1e-13, 1e-8)
}

/// One kernel value for the near field. Free space uses the Hankel function.
pub fn pair_value(spec: &KernelSpec, x: Point2, x0: Point2, tol: f64) -> Result<Complex64> {
    if spec.family == Family::FreeSpace {
        let r = (x[0] - x0[0]).hypot(x[1] - x0[1]);
        if r == 0.0 {
            return Err(Error::Geometry(format!("coincident source and target at {x:?}")));
        }
        return Ok(Complex64::new(0.0, 0.25) * hankel1(0, spec.k_target * r)?);
    }
    eval_kernel(&EvalRequest { spec: *spec, x, x0, tol })
}

/// Potentials at every target: L2T plus the direct near field.
pub fn evaluate(plan: &FmmPlan, locals: &[Option<LocalExpansion>], job: &ConvolveJob) -> Result<Vec<Complex64>> {
    let tree = &plan.targets;
    let stol = s2t_tolerance(job.tol);
    let leaves: Vec<usize> = tree.leaves().collect();
    let per_leaf: Vec<Result<Vec<(usize, Complex64)>>> = leaves
        .par_iter()
        .map(|&b| {
            let mut vals = Vec::with_capacity(tree.nodes[b].len());
            for &i in tree.box_points(b) {
                let x = job.targets[i];
                let mut phi = match &locals[b] {
                    Some(l) => l2t(l, x)?,
                    None => Complex64::new(0.0, 0.0),
                };
                for &s in &plan.interactions.near[b] {
                    for &j in plan.sources.box_points(s) {
                        let p = &job.sources[j];
                        phi += p.charge * pair_value(&plan.spec, x, p.position, stol)?;
                    }
                }
                vals.push((i, phi));
            }
            Ok(vals)
        })
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); job.targets.len()];
    for r in per_leaf {
        for (i, v) in r? {
            out[i] = v;
        }
    }
    Ok(out)
}

/// Work counts of one run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FmmStats {
    pub source_boxes: usize,
    pub target_boxes: usize,
    pub m2l_translations: usize,
    pub m2l_matrices: usize,
    pub direct_pairs: usize,
}

/// `φ(x_i) = Σ_j q_j G(x_i, x_j)` by the FMM.
pub fn convolve(job: &ConvolveJob) -> Result<Vec<Complex64>> {
    convolve_with_stats(job).map(|(v, _)| v)
}

pub fn convolve_with_stats(job: &ConvolveJob) -> Result<(Vec<Complex64>, FmmStats)> {
    let plan = plan(job)?;
    let charges: Vec<Complex64> = job.sources.iter().map(|p| p.charge).collect();
    let physical: Vec<Point2> = job.sources.iter().map(|p| p.position).collect();
    let multipoles = upward_pass(&plan, &charges, &physical)?;
    let cache = match job.m2l_cache_bytes {
        Some(b) => M2LCache::with_limit_bytes(b),
        None => M2LCache::new(),
    };
    let locals = downward_pass(&plan, &multipoles, &cache, job.tol)?;
    let values = evaluate(&plan, &locals, job)?;
    let direct_pairs = plan
        .targets
        .leaves()
        .map(|b| {
            let nt = plan.targets.nodes[b].len();
            plan.interactions.near[b].iter().map(|&s| nt * plan.sources.nodes[s].len()).sum::<usize>()
        })
        .sum();
    let stats = FmmStats {
        source_boxes: plan.sources.nodes.len(),
        target_boxes: plan.targets.nodes.len(),
        m2l_translations: plan.interactions.far.iter().map(Vec::len).sum(),
        m2l_matrices: cache.len(),
        direct_pairs,
    };
    Ok((values, stats))
}

fn direct_tolerance(tol: f64) -> f64 {
    (tol * 1e-4).clamp(1e-13, 1e-10)
}

/// Termwise summation with [`eval_kernel`].
pub fn direct_sum(job: &ConvolveJob) -> Result<Vec<Complex64>> {
    check_job(job)?;
    let n = job.sources.len().saturating_mul(job.targets.len());
    if n > DIRECT_SUM_LIMIT {
        return Err(Error::SizeGuard(format!("direct sum of {n} pairs exceeds {DIRECT_SUM_LIMIT}")));
    }
    let tol = direct_tolerance(job.tol);
    job.targets
        .par_iter()
        .map(|&x| {
            let mut phi = Complex64::new(0.0, 0.0);
            for p in &job.sources {
                phi += p.charge * eval_kernel(&EvalRequest { spec: job.spec, x, x0: p.position, tol })?;
            }
            Ok(phi)
        })
        .collect()
}

/// `‖a − b‖₂ / ‖b‖₂`.
pub fn relative_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}
