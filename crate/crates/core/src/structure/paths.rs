use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;

use super::{
    check_single_ergodic, is_k_ergodic, represent_direction, transition_classes, SingleMatrix,
};
use crate::error::{Error, Result};
use crate::model::{
    dist, factorial, JumpDirection, LatticePoint, ModelSpec, PiecewiseLinearPath, SimplexPoint,
};
use crate::rates::RateClass;

/// Constants of the polynomial rate lower bound `λ_{v_m}(φ) ≥ c₁ (∏_{N_v} φ_j)^{p₁}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrongConstants {
    pub c1: f64,
    pub p1: u32,
}

/// A piecewise-linear path whose segments move along jump directions.
///
/// `path` is parametrized on `[0, 1]`; segment `m` has derivative
/// `speeds[m] · directions[m]`. `unit_durations` are the segment lengths in
/// time when every speed is 1, which is how the constructions are stated.
#[derive(Debug, Clone, Serialize)]
pub struct CommunicatingPath {
    pub path: PiecewiseLinearPath,
    pub directions: Vec<Vec<i32>>,
    /// Listed transition realizing each segment.
    pub transitions: Vec<usize>,
    pub speeds: Vec<f64>,
    pub unit_durations: Vec<f64>,
    /// Euclidean length.
    pub length: f64,
    /// Length divided by the reference distance of the construction.
    pub c_prime: Option<f64>,
    /// `(c, p)` with `λ_{v_m}(φ(s)) ≥ c (min_i y_i)^p` along the path.
    pub lower_bound: Option<(f64, u32)>,
    pub strong: Option<StrongConstants>,
}

impl CommunicatingPath {
    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Total time at unit speed.
    pub fn unit_time(&self) -> f64 {
        self.unit_durations.iter().sum()
    }

    pub fn start(&self) -> &SimplexPoint {
        self.path.start()
    }

    pub fn end(&self) -> &SimplexPoint {
        self.path.end()
    }

    /// Max-norm of `x + Σ_m U_m v_m (t_m − t_{m−1}) − y`.
    pub fn telescoping_residual(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut z = x.to_vec();
        for (v, h) in self.directions.iter().zip(&self.unit_durations) {
            for (zi, &vi) in z.iter_mut().zip(v) {
                *zi += h * vi as f64;
            }
        }
        z.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// The path at unit speed on `[0, unit_time]`.
    pub fn unit_speed_path(&self) -> Result<PiecewiseLinearPath> {
        if self.is_empty() {
            return Ok(self.path.clone());
        }
        let mut t = vec![0.0];
        for h in &self.unit_durations {
            t.push(t.last().unwrap() + h);
        }
        PiecewiseLinearPath::new(t, self.path.knots().to_vec())
    }

    fn assemble(spec: &ModelSpec, x: &SimplexPoint, segs: Vec<(usize, f64)>) -> Result<Self> {
        let d = spec.d();
        let segs: Vec<(usize, f64)> = segs.into_iter().filter(|s| s.1 > 0.0).collect();
        if segs.is_empty() {
            return Ok(CommunicatingPath {
                path: PiecewiseLinearPath::constant(x, 1.0)?,
                directions: vec![],
                transitions: vec![],
                speeds: vec![],
                unit_durations: vec![],
                length: 0.0,
                c_prime: None,
                lower_bound: None,
                strong: None,
            });
        }
        let total: f64 = segs.iter().map(|s| s.1).sum();
        let mut z = x.coords().to_vec();
        let mut knots = vec![x.clone()];
        let mut times = vec![0.0];
        let mut acc = 0.0;
        let mut directions = Vec::new();
        let mut length = 0.0;
        for (i, &(t, h)) in segs.iter().enumerate() {
            let v = spec.transitions()[t].direction(d);
            for (zi, &vi) in z.iter_mut().zip(v.delta()) {
                *zi += h * vi as f64;
            }
            length += h * v.norm();
            acc += h;
            times.push(if i + 1 == segs.len() { 1.0 } else { acc / total });
            knots.push(SimplexPoint::renormalized(z.clone())?.0);
            directions.push(v.delta().to_vec());
        }
        Ok(CommunicatingPath {
            path: PiecewiseLinearPath::new(times, knots)?,
            directions,
            transitions: segs.iter().map(|s| s.0).collect(),
            speeds: vec![total; segs.len()],
            unit_durations: segs.iter().map(|s| s.1).collect(),
            length,
            c_prime: None,
            lower_bound: None,
            strong: None,
        })
    }
}

/// Lattice path with unit steps of size `1/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    pub points: Vec<LatticePoint>,
    pub directions: Vec<JumpDirection>,
}

fn positive_single_edges(spec: &ModelSpec) -> (Vec<Vec<(usize, usize)>>, f64) {
    let d = spec.d();
    let mut adj = vec![Vec::new(); d];
    let mut c0 = f64::INFINITY;
    for (idx, (t, c)) in spec.transitions().iter().zip(transition_classes(spec)).enumerate() {
        if let (1, RateClass::Positive { min }) = (t.k(), c) {
            adj[t.from[0]].push((t.to[0], idx));
            c0 = c0.min(min);
        }
    }
    (adj, c0)
}

fn min_positive_rate(spec: &ModelSpec) -> f64 {
    transition_classes(spec)
        .iter()
        .filter_map(|c| match c {
            RateClass::Positive { min } => Some(*min),
            _ => None,
        })
        .fold(f64::INFINITY, f64::min)
}

/// Shortest positive single-jump route from `j` to a state outside `blocked`.
fn route_out(adj: &[Vec<(usize, usize)>], j: usize, blocked: &[bool]) -> Option<Vec<(usize, usize)>> {
    let d = adj.len();
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; d];
    let mut seen = vec![false; d];
    seen[j] = true;
    let mut q = VecDeque::from([j]);
    while let Some(i) = q.pop_front() {
        for &(k, t) in &adj[i] {
            if seen[k] {
                continue;
            }
            seen[k] = true;
            prev[k] = Some((i, t));
            if !blocked[k] {
                let mut route = vec![(k, t)];
                let mut cur = i;
                while cur != j {
                    let (p, tp) = prev[cur].unwrap();
                    route.push((cur, tp));
                    cur = p;
                }
                route.reverse();
                return Some(route);
            }
            q.push_back(k);
        }
    }
    None
}

/// Coordinate-matching moves: each `(transition, amount)` shifts `amount` of
/// mass along one single jump.
fn single_jump_moves(
    adj: &[Vec<(usize, usize)>],
    mut z: Vec<f64>,
    y: &[f64],
    tol: f64,
) -> Result<Vec<(usize, f64)>> {
    let d = y.len();
    let mut fixed = vec![false; d];
    let mut moves = Vec::new();
    loop {
        for i in 0..d {
            if !fixed[i] && (z[i] - y[i]).abs() <= tol {
                fixed[i] = true;
            }
        }
        if fixed.iter().filter(|&&f| !f).count() <= 1 {
            return Ok(moves);
        }
        let j = (0..d)
            .filter(|&i| !fixed[i])
            .max_by(|&a, &b| (z[a] - y[a]).partial_cmp(&(z[b] - y[b])).unwrap())
            .unwrap();
        let h = z[j] - y[j];
        let mut blocked = fixed.clone();
        blocked[j] = true;
        let route = route_out(adj, j, &blocked)
            .ok_or_else(|| Error::Precondition("no positive single jump leaves the matched set".into()))?;
        for &(_, t) in &route {
            moves.push((t, h));
        }
        z[j] = y[j];
        z[route.last().unwrap().0] += h;
        fixed[j] = true;
    }
}

/// Path from `x` to `y` built from single jumps by matching one coordinate
/// at a time: excess mass at a state is routed along a shortest chain of
/// positive single jumps to the nearest state not yet matched. Requires the
/// single-jump matrix to be ergodic.
pub fn build_path_single_jump(spec: &ModelSpec, x: &SimplexPoint, y: &SimplexPoint) -> Result<CommunicatingPath> {
    check_dims(spec, &[x, y])?;
    if !check_single_ergodic(spec, SingleMatrix::Single).ergodic {
        return Err(Error::Precondition("the single-jump matrix is not ergodic".into()));
    }
    let (adj, c0) = positive_single_edges(spec);
    let moves = single_jump_moves(&adj, x.coords().to_vec(), y.coords(), 1e-15)?;
    let mut p = CommunicatingPath::assemble(spec, x, moves)?;
    if !p.is_empty() {
        p.c_prime = Some(p.length / x.distance(y));
        p.lower_bound = Some((c0, 1));
        p.strong = Some(StrongConstants { c1: c0, p1: 1 });
    }
    Ok(p)
}

/// Lattice version of [`build_path_single_jump`]: every step moves one
/// particle, so all intermediate points lie in `𝒮_n`.
pub fn build_path_single_jump_discrete(spec: &ModelSpec, x: &LatticePoint, y: &LatticePoint) -> Result<DiscretePath> {
    if x.n() != y.n() {
        return Err(Error::Population {
            expected: x.n() as usize,
            got: y.n() as usize,
        });
    }
    if x.d() != spec.d() || y.d() != spec.d() {
        return Err(Error::Precondition("dimension mismatch".into()));
    }
    if !check_single_ergodic(spec, SingleMatrix::Single).ergodic {
        return Err(Error::Precondition("the single-jump matrix is not ergodic".into()));
    }
    let (adj, _) = positive_single_edges(spec);
    let z: Vec<f64> = x.counts().iter().map(|&c| c as f64).collect();
    let target: Vec<f64> = y.counts().iter().map(|&c| c as f64).collect();
    let moves = single_jump_moves(&adj, z, &target, 0.5)?;
    let d = spec.d();
    let mut points = vec![x.clone()];
    let mut directions = Vec::new();
    let mut cur = x.clone();
    for (t, h) in moves {
        let v = spec.transitions()[t].direction(d);
        for _ in 0..h.round() as u64 {
            cur = cur
                .shifted(&v)
                .ok_or_else(|| Error::Precondition("lattice step left the simplex".into()))?;
            points.push(cur.clone());
            directions.push(v.clone());
        }
    }
    Ok(DiscretePath { points, directions })
}

fn check_dims(spec: &ModelSpec, pts: &[&SimplexPoint]) -> Result<()> {
    if pts.iter().any(|p| p.d() != spec.d()) {
        return Err(Error::Precondition(format!("points must have d = {}", spec.d())));
    }
    Ok(())
}

pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut css = 0.0;
    let mut tau = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|&vi| (vi - tau).max(0.0)).collect()
}

/// Euclidean distance from `x` to `{z ∈ 𝒮 : min_i z_i ≥ a}`.
pub fn distance_to_inner(x: &[f64], a: f64) -> f64 {
    let d = x.len() as f64;
    let s = 1.0 - d * a;
    if s <= 0.0 {
        return dist(x, &vec![1.0 / d; x.len()]);
    }
    let w: Vec<f64> = x.iter().map(|xi| (xi - a) / s).collect();
    let p = project_simplex(&w);
    s * dist(&p, &w)
}

/// Path from `x` into `{z : min_i z_i ≥ a}`.
///
/// Repeatedly: order the states by mass, take the accessibility chain from
/// the heaviest to the lightest state, stop it at the first chain state `ū`
/// below `a`, and run the chain's transitions with durations
/// `K(K+1)^{m̄−2−m}h` (the last one `h`), where `h = a − z_ū`. Each round
/// lifts `ū` to `a`, never pulls a coordinate that is decreasing below `a`,
/// and lowers the number of deficient states.
pub fn build_boundary_escape(spec: &ModelSpec, x: &SimplexPoint, a: f64) -> Result<CommunicatingPath> {
    check_dims(spec, &[x])?;
    let d = spec.d();
    let k = spec.k_max().max(1);
    let a_max = 1.0 / ((k as f64 + 1.0).powi(d as i32 - 1) * d as f64);
    if !(a > 0.0 && a <= a_max * (1.0 + 1e-12)) {
        return Err(Error::Precondition(format!("need 0 < a ≤ {a_max}, got {a}")));
    }
    let kerg = is_k_ergodic(spec);
    if !kerg.ergodic {
        return Err(Error::Precondition("the model is not K-ergodic".into()));
    }
    let tol = 1e-13;
    let mut z = x.coords().to_vec();
    let mut segs: Vec<(usize, f64)> = Vec::new();
    for _ in 0..=d {
        if z.iter().all(|&zi| zi >= a - tol) {
            let mut p = CommunicatingPath::assemble(spec, x, segs)?;
            if !p.is_empty() {
                p.c_prime = Some(p.length / distance_to_inner(x.coords(), a));
                p.lower_bound = Some((min_positive_rate(spec) / factorial(k) as f64, d as u32));
            }
            return Ok(p);
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| z[j].partial_cmp(&z[i]).unwrap().then(i.cmp(&j)));
        let chain = kerg.closures[order[0]]
            .chain(spec, order[d - 1])
            .expect("ergodic model reaches every state");
        let mbar = chain.iter().position(|&(s, _)| z[s] < a - tol).unwrap();
        let h = a - z[chain[mbar].0];
        let m0 = mbar + 1;
        for (m, &(_, t)) in chain[..mbar].iter().enumerate() {
            let m1 = m + 1;
            let dur = if m1 + 1 == m0 {
                h
            } else {
                k as f64 * (k as f64 + 1.0).powi((m0 - 2 - m1) as i32) * h
            };
            let v = spec.transitions()[t].direction(d);
            for (zi, &vi) in z.iter_mut().zip(v.delta()) {
                *zi += dur * vi as f64;
            }
            segs.push((t, dur));
        }
    }
    Err(Error::NonConvergence("boundary escape did not terminate".into()))
}

/// Path between two points of `{z : min_i z_i ≥ a}` staying in
/// `{z : min_i z_i ≥ a/2}`.
///
/// A greedy polyline along coordinate directions `e_w − e_u` is followed by
/// replacing each leg with its positive-rate representation, repeated `P`
/// times with `P` the smallest count keeping every knot within `a/2` of the
/// leg.
pub fn build_interior_path(spec: &ModelSpec, x: &SimplexPoint, y: &SimplexPoint, a: f64) -> Result<CommunicatingPath> {
    check_dims(spec, &[x, y])?;
    if !(a > 0.0) || x.min_coord() < a - 1e-12 || y.min_coord() < a - 1e-12 {
        return Err(Error::Precondition(format!("both endpoints need all coordinates ≥ a = {a}")));
    }
    if !is_k_ergodic(spec).ergodic {
        return Err(Error::Precondition("the model is not K-ergodic".into()));
    }
    let d = spec.d();
    let mut z = x.coords().to_vec();
    let yc = y.coords();
    let mut legs: Vec<(usize, usize, f64)> = Vec::new();
    for _ in 0..d {
        let u = (0..d).max_by(|&i, &j| (z[i] - yc[i]).partial_cmp(&(z[j] - yc[j])).unwrap()).unwrap();
        let w = (0..d).max_by(|&i, &j| (yc[i] - z[i]).partial_cmp(&(yc[j] - z[j])).unwrap()).unwrap();
        let s = (z[u] - yc[u]).min(yc[w] - z[w]);
        if s <= 1e-15 {
            break;
        }
        legs.push((u, w, s));
        z[u] -= s;
        z[w] += s;
    }
    let mut reps = BTreeMap::new();
    let mut segs: Vec<(usize, f64)> = Vec::new();
    for &(u, w, s) in &legs {
        if let std::collections::btree_map::Entry::Vacant(e) = reps.entry((u, w)) {
            e.insert(represent_direction(spec, u, w)?);
        }
        let rep = &reps[&(u, w)];
        let mut e = vec![0.0; d];
        e[w] = 1.0;
        e[u] = -1.0;
        // largest distance of the representation's partial sums from the leg
        let mut q = vec![0.0; d];
        let mut dev: f64 = 0.0;
        for &(t, am) in &rep.terms {
            let v = spec.transitions()[t].direction(d);
            for (qi, &vi) in q.iter_mut().zip(v.delta()) {
                *qi += am * vi as f64;
            }
            let tau = (q.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / 2.0).clamp(0.0, 1.0);
            let r = q.iter().zip(&e).map(|(qi, ei)| (qi - tau * ei).powi(2)).sum::<f64>().sqrt();
            dev = dev.max(r);
        }
        let p = ((dev * s / (a / 2.0)).ceil() as usize).max(1);
        for _ in 0..p {
            for &(t, am) in &rep.terms {
                match segs.last_mut() {
                    Some(last) if last.0 == t && rep.terms.len() == 1 => last.1 += am * s / p as f64,
                    _ => segs.push((t, am * s / p as f64)),
                }
            }
        }
    }
    let mut path = CommunicatingPath::assemble(spec, x, segs)?;
    if !path.is_empty() {
        path.c_prime = Some(path.length / x.distance(y));
        let k = spec.k_max().max(1);
        path.lower_bound = Some((
            min_positive_rate(spec) / (2f64.powi(d as i32) * factorial(k) as f64),
            d as u32,
        ));
    }
    Ok(path)
}
