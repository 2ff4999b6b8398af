//! Basin structure of a learned energy: metastable minima, travel between
//! them in a magnetized landscape, barrier estimates and the
//! disconnectivity tree.

use std::fmt::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{check_batch, l2_norm, Energy, GradientPair, Tensor};
use crate::plot::Svg;
use crate::rng::{self, StreamRng};

/// Quadratic pull `(alpha / 2) |x - target|^2` added to an energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Magnetization {
    pub alpha: f64,
    pub target: Tensor,
}

impl Magnetization {
    pub fn new(alpha: f64, target: Tensor) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Precondition(format!("alpha must be nonnegative, got {alpha}")));
        }
        Ok(Self { alpha, target })
    }
}

/// `U(x) + (alpha / 2) |x - target|^2`.
pub fn magnetized_energy<E: Energy + ?Sized>(pot: &E, x: &Tensor, mag: &Magnetization) -> Result<f64> {
    check_shapes(pot, x, mag)?;
    Ok(pot.energy(x)? + pull(x.data(), mag.target.data(), mag.alpha, None))
}

/// Value and input gradient `dU/dx + alpha (x - target)` of the magnetized energy.
pub fn magnetized_grad<E: Energy + ?Sized>(pot: &E, x: &Tensor, mag: &Magnetization) -> Result<GradientPair> {
    check_shapes(pot, x, mag)?;
    let mut g = pot.grad_wrt_input(x)?;
    g.value += pull(x.data(), mag.target.data(), mag.alpha, Some(g.grad.data_mut()));
    Ok(g)
}

fn check_shapes<E: Energy + ?Sized>(pot: &E, x: &Tensor, mag: &Magnetization) -> Result<()> {
    if x.shape() != pot.input_shape() {
        return Err(Error::dim("magnetized energy input", pot.input_shape(), x.shape()));
    }
    if mag.target.shape() != pot.input_shape() {
        return Err(Error::dim("magnetization target", pot.input_shape(), mag.target.shape()));
    }
    Ok(())
}

/// Adds the pull gradient into `grad` when given; returns the pull energy.
fn pull(x: &[f64], target: &[f64], alpha: f64, grad: Option<&mut [f64]>) -> f64 {
    if let Some(g) = grad {
        for ((g, a), t) in g.iter_mut().zip(x).zip(target) {
            *g += alpha * (a - t);
        }
    }
    let r2: f64 = x.iter().zip(target).map(|(a, t)| (a - t) * (a - t)).sum();
    0.5 * alpha * r2
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Settings for minimum discovery.
#[derive(Debug, Clone, PartialEq)]
pub struct MetastableConfig {
    /// Low-temperature Langevin steps before the descent.
    pub langevin_steps: usize,
    pub epsilon: f64,
    /// Noise temperature of the Langevin phase (1 samples `exp(-U)`).
    pub temperature: f64,
    /// Maximum number of descent iterations.
    pub descent_steps: usize,
    /// Stop when `|dU/dx|` falls below this.
    pub tol: f64,
    /// Minima closer than this are merged.
    pub dedup_radius: f64,
}

impl MetastableConfig {
    /// Defaults for inputs with `n` entries: capture radius `0.05 sqrt(n)`.
    pub fn for_dim(n: usize) -> Self {
        Self {
            langevin_steps: 200,
            epsilon: 0.05,
            temperature: 0.01,
            descent_steps: 20_000,
            tol: 1e-5,
            dedup_radius: 0.05 * (n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub state: Tensor,
    pub energy: f64,
    /// Start that produced it.
    pub start: usize,
}

fn langevin_phase<E: Energy + ?Sized>(
    pot: &E,
    x: &mut [f64],
    steps: usize,
    epsilon: f64,
    temperature: f64,
    rng: &mut StreamRng,
) -> Result<()> {
    let mut g = vec![0.0; x.len()];
    let h = 0.5 * epsilon * epsilon;
    let noise = epsilon * temperature.sqrt();
    for _ in 0..steps {
        pot.energy_grad_at(x, &mut g)?;
        for (v, gi) in x.iter_mut().zip(&g) {
            let z: f64 = StandardNormal.sample(rng);
            *v += -h * gi + noise * z;
        }
    }
    Ok(())
}

/// Gradient descent with backtracking. Returns `Some(energy)` once the
/// gradient norm drops below `tol` or no step length above `1e-14`
/// decreases the energy (a kink minimum of a piecewise-linear network);
/// `None` if the iteration budget runs out first.
fn descend<E: Energy + ?Sized>(pot: &E, x: &mut Vec<f64>, max_iter: usize, tol: f64) -> Result<Option<f64>> {
    let mut g = vec![0.0; x.len()];
    let mut u = pot.energy_grad_at(x, &mut g)?;
    let mut step = 0.1;
    let mut trial = vec![0.0; x.len()];
    for _ in 0..max_iter {
        let gn = l2_norm(&g);
        if !u.is_finite() || !gn.is_finite() {
            return Ok(None);
        }
        if gn < tol {
            return Ok(Some(u));
        }
        loop {
            for ((t, a), gi) in trial.iter_mut().zip(x.iter()).zip(&g) {
                *t = a - step * gi;
            }
            let ut = pot.energy_at(&trial)?;
            if ut <= u - 1e-4 * step * gn * gn {
                std::mem::swap(x, &mut trial);
                u = pot.energy_grad_at(x, &mut g)?;
                step = (step * 2.0).min(1e3);
                break;
            }
            step *= 0.5;
            if step < 1e-14 {
                return Ok(Some(u));
            }
        }
    }
    Ok(None)
}

/// Local minima reached from each start by low-temperature Langevin then
/// gradient descent, deduplicated and sorted by energy (ties by start
/// index). Starts whose descent does not converge are dropped.
pub fn find_metastable<E: Energy + ?Sized, R: Rng + ?Sized>(
    pot: &E,
    starts: &Tensor,
    cfg: &MetastableConfig,
    rng: &mut R,
) -> Result<Vec<Minimum>> {
    check_batch(pot, starts)?;
    if starts.batch_len() == 0 {
        return Err(Error::Precondition("no starting states".into()));
    }
    let key = rng::fork_key(rng);
    let found: Vec<Option<(Vec<f64>, f64)>> = starts
        .samples()
        .enumerate()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, s)| -> Result<_> {
            let mut x = s.to_vec();
            let mut r = rng::stream(key, i as u64);
            langevin_phase(pot, &mut x, cfg.langevin_steps, cfg.epsilon, cfg.temperature, &mut r)?;
            Ok(descend(pot, &mut x, cfg.descent_steps, cfg.tol)?.map(|u| (x, u)))
        })
        .collect::<Result<_>>()?;

    let mut cands: Vec<(usize, Vec<f64>, f64)> = found
        .into_iter()
        .enumerate()
        .filter_map(|(i, f)| f.map(|(x, u)| (i, x, u)))
        .collect();
    cands.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
    let mut out: Vec<Minimum> = Vec::new();
    for (i, x, u) in cands {
        if out.iter().all(|m| distance(m.state.data(), &x) > cfg.dedup_radius) {
            out.push(Minimum {
                state: Tensor::new(pot.input_shape().to_vec(), x)?,
                energy: u,
                start: i,
            });
        }
    }
    Ok(out)
}

/// Settings for grouping minima into basins.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeConfig {
    /// Magnetization strengths tried, strongest first.
    pub alpha_schedule: Vec<f64>,
    /// Langevin steps allowed per travel attempt.
    pub travel_budget: usize,
    pub epsilon: f64,
    pub temperature: f64,
    /// Travel succeeds on coming this close to the target.
    pub capture_radius: f64,
    /// A minimum joins a basin when the barrier above its own energy is at
    /// most this.
    pub energy_resolution: f64,
    pub seed: u64,
}

impl MergeConfig {
    /// Geometric alpha schedule from 1 to 0.01 in 10 stages; capture radius
    /// `0.05 sqrt(n)`.
    pub fn for_dim(n: usize) -> Self {
        Self {
            alpha_schedule: geometric_schedule(1.0, 0.01, 10),
            travel_budget: 5000,
            epsilon: 0.05,
            temperature: 0.01,
            capture_radius: 0.05 * (n as f64).sqrt(),
            energy_resolution: 0.5,
            seed: 0,
        }
    }

    pub fn to_kv(&self) -> String {
        let a: Vec<String> = self.alpha_schedule.iter().map(|v| v.to_string()).collect();
        format!(
            "alpha_schedule={}\ntravel_budget={}\nepsilon={}\ntemperature={}\ncapture_radius={}\nenergy_resolution={}\nseed={}\n",
            a.join(","),
            self.travel_budget,
            self.epsilon,
            self.temperature,
            self.capture_radius,
            self.energy_resolution,
            self.seed
        )
    }
}

pub fn geometric_schedule(from: f64, to: f64, stages: usize) -> Vec<f64> {
    if stages <= 1 {
        return vec![from];
    }
    let ratio = (to / from).powf(1.0 / (stages - 1) as f64);
    (0..stages).map(|k| from * ratio.powi(k as i32)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Basin {
    /// Lowest-energy member.
    pub representative: Tensor,
    pub min_energy: f64,
    pub members: Vec<Tensor>,
    pub member_energies: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub barrier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeMap {
    pub basins: Vec<Basin>,
    /// Lowest known barrier between basin pairs, `a < b`.
    pub merges: Vec<Merge>,
}

/// Highest unmagnetized energy along a magnetized Langevin path from `from`
/// toward `to`, or `None` if the path never gets within the capture radius.
fn travel<E: Energy + ?Sized>(
    pot: &E,
    from: &[f64],
    to: &[f64],
    alpha: f64,
    cfg: &MergeConfig,
    rng: &mut StreamRng,
) -> Result<Option<f64>> {
    let mut x = from.to_vec();
    let mut g = vec![0.0; x.len()];
    let h = 0.5 * cfg.epsilon * cfg.epsilon;
    let noise = cfg.epsilon * cfg.temperature.sqrt();
    let mut top = f64::NEG_INFINITY;
    for _ in 0..cfg.travel_budget {
        let u = pot.energy_grad_at(&x, &mut g)?;
        if !u.is_finite() {
            return Ok(None);
        }
        top = top.max(u);
        pull(&x, to, alpha, Some(&mut g));
        for (v, gi) in x.iter_mut().zip(&g) {
            let z: f64 = StandardNormal.sample(rng);
            *v += -h * gi + noise * z;
        }
        if distance(&x, to) <= cfg.capture_radius {
            let u = pot.energy_at(&x)?;
            return Ok(u.is_finite().then_some(top.max(u)));
        }
    }
    Ok(None)
}

/// Lowest path maximum over the alpha schedule, floored at both endpoint
/// energies. The schedule stops at the first failure after a success.
fn barrier_estimate<E: Energy + ?Sized>(
    pot: &E,
    from: &Minimum,
    from_index: usize,
    to: &Basin,
    to_index: usize,
    cfg: &MergeConfig,
) -> Result<Option<f64>> {
    let mut best: Option<f64> = None;
    for (k, &alpha) in cfg.alpha_schedule.iter().enumerate() {
        let key = rng::mix(cfg.seed ^ rng::mix(from_index as u64) ^ rng::mix((to_index as u64) << 32));
        let mut r = rng::stream(key, k as u64);
        match travel(pot, from.state.data(), to.representative.data(), alpha, cfg, &mut r)? {
            Some(b) => best = Some(best.map_or(b, |v: f64| v.min(b))),
            None if best.is_some() => break,
            None => {}
        }
    }
    Ok(best.map(|b| b.max(from.energy).max(to.min_energy)))
}

/// Groups minima (sorted by energy) into basins.
///
/// Each minimum tries to travel to the existing basins in creation order
/// and joins the first one whose barrier lies within `energy_resolution`
/// of its own energy; otherwise it founds a new basin. Every barrier found
/// on the way bounds the barrier between the basins involved.
pub fn merge_basins<E: Energy + ?Sized>(pot: &E, minima: &[Minimum], cfg: &MergeConfig) -> Result<LandscapeMap> {
    if minima.is_empty() {
        return Err(Error::Precondition("no minima to merge".into()));
    }
    if minima.windows(2).any(|w| w[1].energy < w[0].energy) {
        return Err(Error::Precondition("minima must be sorted by energy".into()));
    }
    let mut basins: Vec<Basin> = Vec::new();
    // Barrier from each member to its own basin representative.
    let mut home: Vec<f64> = Vec::new();
    let mut edges: Vec<Merge> = Vec::new();
    for (mi, m) in minima.iter().enumerate() {
        let mut joined = None;
        let mut seen = Vec::new();
        for (bi, basin) in basins.iter().enumerate() {
            if let Some(b) = barrier_estimate(pot, m, mi, basin, bi, cfg)? {
                if b - m.energy <= cfg.energy_resolution {
                    joined = Some((bi, b));
                    break;
                }
                seen.push((bi, b));
            }
        }
        let (own, via) = match joined {
            Some((bi, b)) => {
                let basin = &mut basins[bi];
                basin.members.push(m.state.clone());
                basin.member_energies.push(m.energy);
                home.push(b);
                (bi, b)
            }
            None => {
                basins.push(Basin {
                    representative: m.state.clone(),
                    min_energy: m.energy,
                    members: vec![m.state.clone()],
                    member_energies: vec![m.energy],
                });
                home.push(m.energy);
                (basins.len() - 1, m.energy)
            }
        };
        for (bi, b) in seen {
            let barrier = b.max(via);
            let (a, c) = (bi.min(own), bi.max(own));
            match edges.iter_mut().find(|e| e.a == a && e.b == c) {
                Some(e) => e.barrier = e.barrier.min(barrier),
                None => edges.push(Merge { a, b: c, barrier }),
            }
        }
    }
    for e in &mut edges {
        e.barrier = e.barrier.max(basins[e.a].min_energy).max(basins[e.b].min_energy);
    }
    edges.sort_by_key(|e| (e.a, e.b));
    Ok(LandscapeMap { basins, merges: edges })
}

impl LandscapeMap {
    /// Structured text: one line per basin, then one per merge.
    pub fn to_text(&self, member_files: Option<&[Vec<String>]>) -> String {
        let mut s = String::new();
        for (i, b) in self.basins.iter().enumerate() {
            let _ = write!(s, "basin {i} min_energy={} members={}", b.min_energy, b.members.len());
            if let Some(files) = member_files.and_then(|f| f.get(i)) {
                let _ = write!(s, " files={}", files.join(","));
            } else if b.representative.len() <= 8 {
                let r: Vec<String> = b.representative.data().iter().map(|v| format!("{v:.6}")).collect();
                let _ = write!(s, " minimum={}", r.join(","));
            }
            s.push('\n');
        }
        for m in &self.merges {
            let _ = writeln!(s, "merge {} {} barrier={}", m.a, m.b, m.barrier);
        }
        s
    }
}

/// Node of the disconnectivity tree: leaves are basins, inner nodes joins.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf { basin: usize, energy: f64, members: usize },
    Join { left: usize, right: usize, height: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Disconnectivity {
    /// Leaves first (index = basin), then joins in increasing height.
    pub nodes: Vec<TreeNode>,
    /// Indices of the nodes without a parent.
    pub roots: Vec<usize>,
    /// Horizontal position of every node.
    pub x: Vec<f64>,
}

impl Disconnectivity {
    pub fn height(&self, node: usize) -> f64 {
        match self.nodes[node] {
            TreeNode::Leaf { energy, .. } => energy,
            TreeNode::Join { height, .. } => height,
        }
    }

    pub fn joins(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            TreeNode::Join { left, right, height } => Some((left, right, height)),
            _ => None,
        })
    }

    pub fn to_svg(&self, title: &str) -> String {
        let (w, h, margin) = (640.0, 420.0, 50.0);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..self.nodes.len() {
            lo = lo.min(self.height(i));
            hi = hi.max(self.height(i));
        }
        if hi - lo < 1e-9 {
            hi = lo + 1.0;
        }
        let top = hi + 0.1 * (hi - lo);
        let max_x = self.x.iter().cloned().fold(1.0, f64::max);
        let px = |x: f64| margin + (x + 0.5) / (max_x + 1.0) * (w - 2.0 * margin);
        let py = |e: f64| h - margin - (e - lo) / (top - lo) * (h - 2.0 * margin);
        let mut svg = Svg::new(w, h);
        svg.text(w / 2.0, 22.0, 15.0, "middle", title);
        svg.line(margin - 8.0, margin, margin - 8.0, h - margin, "black", 1.0);
        svg.text(margin - 10.0, py(lo) + 4.0, 10.0, "end", &format!("{lo:.3}"));
        svg.text(margin - 10.0, py(hi) + 4.0, 10.0, "end", &format!("{hi:.3}"));
        let mut parent_height = vec![top; self.nodes.len()];
        for (l, r, hgt) in self.joins() {
            parent_height[l] = hgt;
            parent_height[r] = hgt;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let x = px(self.x[i]);
            svg.line(x, py(self.height(i)), x, py(parent_height[i]), "black", 1.2);
            match *node {
                TreeNode::Leaf { members, basin, .. } => {
                    svg.circle(x, py(self.height(i)), 3.0 + (members as f64).sqrt() * 2.0, "#1f77b4");
                    svg.text(x, h - margin + 16.0, 10.0, "middle", &basin.to_string());
                }
                TreeNode::Join { left, right, height } => {
                    svg.line(px(self.x[left]), py(height), px(self.x[right]), py(height), "black", 1.2);
                }
            }
        }
        svg.finish()
    }
}

/// Disconnectivity tree of a map: single-linkage joins over the merge
/// barriers (a minimum spanning forest built in increasing barrier order).
pub fn emit_disconnectivity(map: &LandscapeMap) -> Result<Disconnectivity> {
    let n = map.basins.len();
    if n == 0 {
        return Err(Error::Precondition("empty landscape map".into()));
    }
    let mut nodes: Vec<TreeNode> = map
        .basins
        .iter()
        .enumerate()
        .map(|(i, b)| TreeNode::Leaf {
            basin: i,
            energy: b.min_energy,
            members: b.members.len(),
        })
        .collect();
    // Union-find over basins, tracking the tree node of each component.
    let mut parent: Vec<usize> = (0..n).collect();
    let mut comp_node: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut edges = map.merges.clone();
    edges.sort_by(|x, y| x.barrier.total_cmp(&y.barrier).then((x.a, x.b).cmp(&(y.a, y.b))));
    for e in edges {
        if e.a >= n || e.b >= n {
            return Err(Error::Index(format!("merge refers to basin {} of {n}", e.a.max(e.b))));
        }
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        if ra == rb {
            continue;
        }
        let height = e.barrier.max(height_of(&nodes, comp_node[ra])).max(height_of(&nodes, comp_node[rb]));
        nodes.push(TreeNode::Join {
            left: comp_node[ra],
            right: comp_node[rb],
            height,
        });
        parent[rb] = ra;
        comp_node[ra] = nodes.len() - 1;
    }
    let mut roots: Vec<usize> = (0..n).filter(|&i| find(&mut parent, i) == i).map(|i| comp_node[i]).collect();
    roots.sort_unstable();

    let mut x = vec![0.0; nodes.len()];
    let mut next = 0.0;
    for &r in &roots {
        layout(&nodes, r, &mut x, &mut next);
    }
    Ok(Disconnectivity { nodes, roots, x })
}

fn height_of(nodes: &[TreeNode], i: usize) -> f64 {
    match nodes[i] {
        TreeNode::Leaf { energy, .. } => energy,
        TreeNode::Join { height, .. } => height,
    }
}

fn layout(nodes: &[TreeNode], i: usize, x: &mut [f64], next: &mut f64) {
    match nodes[i] {
        TreeNode::Leaf { .. } => {
            x[i] = *next;
            *next += 1.0;
        }
        TreeNode::Join { left, right, .. } => {
            layout(nodes, left, x, next);
            layout(nodes, right, x, next);
            x[i] = 0.5 * (x[left] + x[right]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::analytic::{DoubleWell, Quadratic};

    fn starts(points: &[[f64; 2]]) -> Tensor {
        Tensor::new(vec![points.len(), 2], points.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn magnetization_basics() {
        let q = Quadratic::standard(2);
        let x = Tensor::vector(vec![0.3, -0.4]);
        let zero = Magnetization::new(0.0, Tensor::vector(vec![5.0, 5.0])).unwrap();
        assert_eq!(magnetized_energy(&q, &x, &zero).unwrap(), q.energy(&x).unwrap());
        let at = Magnetization::new(3.0, x.clone()).unwrap();
        assert_eq!(magnetized_energy(&q, &x, &at).unwrap(), q.energy(&x).unwrap());
        assert!(Magnetization::new(-1.0, x).is_err());
    }

    #[test]
    fn magnetized_gradient_matches_finite_differences() {
        let dw = DoubleWell;
        let mag = Magnetization::new(0.7, Tensor::vector(vec![-1.0, 0.2])).unwrap();
        let x = Tensor::vector(vec![0.4, -0.3]);
        let g = magnetized_grad(&dw, &x, &mag).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let (mut a, mut b) = (x.clone(), x.clone());
            a.data_mut()[i] += h;
            b.data_mut()[i] -= h;
            let fd = (magnetized_energy(&dw, &a, &mag).unwrap() - magnetized_energy(&dw, &b, &mag).unwrap()) / (2.0 * h);
            assert!((fd - g.grad.data()[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn bowl_has_one_minimum() {
        let q = Quadratic::new(vec![2], 0.5).with_center(vec![0.2, -0.1]);
        let s = starts(&[[0.9, 0.9], [-0.8, 0.5], [0.0, -0.9]]);
        let m = find_metastable(&q, &s, &MetastableConfig::for_dim(2), &mut rng::seeded(1)).unwrap();
        assert_eq!(m.len(), 1);
        assert!(distance(m[0].state.data(), &[0.2, -0.1]) < 1e-3);
    }

    #[test]
    fn double_well_minima() {
        let s = starts(&[[0.5, 0.5], [-0.3, -0.6], [1.4, 0.1], [-1.2, 0.3]]);
        let m = find_metastable(&DoubleWell, &s, &MetastableConfig::for_dim(2), &mut rng::seeded(2)).unwrap();
        assert_eq!(m.len(), 2);
        let mut xs: Vec<f64> = m.iter().map(|v| v.state.data()[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] + 1.0).abs() < 1e-3 && (xs[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn duplicate_starts_collapse() {
        let s = starts(&[[0.7, 0.1], [0.7, 0.1], [0.7, 0.1]]);
        let m = find_metastable(&DoubleWell, &s, &MetastableConfig::for_dim(2), &mut rng::seeded(3)).unwrap();
        assert_eq!(m.len(), 1);
    }

    fn double_well_map(budget: usize) -> LandscapeMap {
        let s = starts(&[[0.5, 0.5], [-0.3, -0.6]]);
        let m = find_metastable(&DoubleWell, &s, &MetastableConfig::for_dim(2), &mut rng::seeded(4)).unwrap();
        let mut cfg = MergeConfig::for_dim(2);
        cfg.travel_budget = budget;
        merge_basins(&DoubleWell, &m, &cfg).unwrap()
    }

    #[test]
    fn double_well_two_basins_at_saddle() {
        let map = double_well_map(5000);
        assert_eq!(map.basins.len(), 2);
        assert_eq!(map.merges.len(), 1);
        let b = map.merges[0].barrier;
        assert!((b - 1.0).abs() < 0.1, "{b}");
    }

    #[test]
    fn single_minimum_single_basin() {
        let m = vec![Minimum {
            state: Tensor::vector(vec![1.0, 0.0]),
            energy: 0.0,
            start: 0,
        }];
        let map = merge_basins(&DoubleWell, &m, &MergeConfig::for_dim(2)).unwrap();
        assert_eq!(map.basins.len(), 1);
        assert!(map.merges.is_empty());
        let tree = emit_disconnectivity(&map).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.joins().count(), 0);
    }

    #[test]
    fn two_basin_tree_joins_at_barrier() {
        let basin = |e: f64| Basin {
            representative: Tensor::vector(vec![e]),
            min_energy: e,
            members: vec![Tensor::vector(vec![e])],
            member_energies: vec![e],
        };
        let map = LandscapeMap {
            basins: vec![basin(0.0), basin(0.5)],
            merges: vec![Merge { a: 0, b: 1, barrier: 2.0 }],
        };
        let tree = emit_disconnectivity(&map).unwrap();
        let joins: Vec<_> = tree.joins().collect();
        assert_eq!(joins, vec![(0, 1, 2.0)]);
        assert_eq!(tree.roots, vec![2]);
        assert!(tree.to_svg("t").contains("<line"));
    }

    #[test]
    fn unsorted_minima_rejected() {
        let m = |e: f64| Minimum {
            state: Tensor::vector(vec![0.0, 0.0]),
            energy: e,
            start: 0,
        };
        let err = merge_basins(&DoubleWell, &[m(1.0), m(0.0)], &MergeConfig::for_dim(2)).unwrap_err();
        assert_eq!(err.class(), "precondition");
    }

    #[test]
    fn schedule_is_geometric() {
        let s = geometric_schedule(1.0, 0.01, 10);
        assert_eq!(s.len(), 10);
        assert!((s[9] - 0.01).abs() < 1e-12);
        assert!((s[1] / s[0] - s[5] / s[4]).abs() < 1e-12);
    }
}
