use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{is_k_ergodic, AccessibilityClosure};
use crate::error::{Error, Result};
use crate::model::ModelSpec;

/// Solve `(I − C) x = y` for a nonnegative `C` with zero diagonal and row
/// sums below one, and `y ≥ 0`. The solution is unique and nonnegative.
pub fn solve_nonneg_linear(c: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    check_shape(c, y)?;
    for (i, row) in c.iter().enumerate() {
        let s: f64 = row.iter().sum();
        if s >= 1.0 {
            return Err(Error::Precondition(format!("row {} of C sums to {s} ≥ 1", i + 1)));
        }
    }
    solve_refined(c, y)
}

/// Same system when the column sums of `C` are below one.
pub(crate) fn solve_nonneg_linear_cols(c: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    check_shape(c, y)?;
    for j in 0..c.len() {
        let s: f64 = c.iter().map(|r| r[j]).sum();
        if s >= 1.0 {
            return Err(Error::Precondition(format!("column {} of C sums to {s} ≥ 1", j + 1)));
        }
    }
    solve_refined(c, y)
}

fn check_shape(c: &[Vec<f64>], y: &[f64]) -> Result<()> {
    let n = y.len();
    if c.len() != n || c.iter().any(|r| r.len() != n) {
        return Err(Error::Precondition("C must be N×N with N = len(y)".into()));
    }
    for (i, row) in c.iter().enumerate() {
        if row[i] != 0.0 {
            return Err(Error::Precondition(format!("C has nonzero diagonal entry {}", i + 1)));
        }
        if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Precondition(format!("row {} of C has a negative entry", i + 1)));
        }
    }
    if y.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Precondition("y must be nonnegative".into()));
    }
    Ok(())
}

fn solve_refined(c: &[Vec<f64>], y: &[f64]) -> Result<Vec<f64>> {
    let n = y.len();
    if n == 0 {
        return Ok(vec![]);
    }
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { -c[i][j] });
    let b = DVector::from_column_slice(y);
    let lu = a.clone().lu();
    let mut x = lu
        .solve(&b)
        .ok_or_else(|| Error::NonConvergence("I − C is singular".into()))?;
    for _ in 0..3 {
        let r = &b - &a * &x;
        if r.amax() <= 1e-15 {
            break;
        }
        if let Some(dx) = lu.solve(&r) {
            x += dx;
        }
    }
    // exact arithmetic gives x ≥ 0; clear roundoff below zero
    Ok(x.iter().map(|&v| if v < 0.0 && v > -1e-14 { 0.0 } else { v }).collect())
}

/// `e_w − e_u = Σ a_m (e_{j_m} − e_{i_m})` over positive-rate transitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Representation {
    pub u: usize,
    pub w: usize,
    /// `(listed transition index, a_m)`, all `a_m > 0`.
    pub terms: Vec<(usize, f64)>,
    /// Max-norm of `Σ a_m v_m − (e_w − e_u)`.
    pub residual: f64,
}

/// Express the coordinate direction `e_w − e_u` as a nonnegative combination
/// of positive-rate jump directions.
///
/// For every `s ≠ w` an accessibility chain from `s` to `w` is weighted by
/// coefficients `b_m` solving `κ_m b_m = K Σ_{r>m} b_r` (with `b_{M−1} = 1`),
/// which makes the resulting vector `Σ_{i≠s} c_i^{(s)} e_i − e_s` have
/// `c^{(s)} ≥ 0` after scaling to unit mass. The multipliers θ of these
/// vectors solve `(I − C)θ = ẽ_u` with `C_{is} = c_i^{(s)}`. Terms on the
/// same transition are merged and opposite directions cancelled.
pub fn represent_direction(spec: &ModelSpec, u: usize, w: usize) -> Result<Representation> {
    let d = spec.d();
    if u >= d || w >= d || u == w {
        return Err(Error::Precondition("need two distinct valid states".into()));
    }
    let kerg = is_k_ergodic(spec);
    if !kerg.ergodic {
        return Err(Error::Precondition("the model is not K-ergodic".into()));
    }
    let k = spec.k_max() as f64;
    let others: Vec<usize> = (0..d).filter(|&s| s != w).collect();
    let mut combos: Vec<Vec<(usize, f64)>> = Vec::with_capacity(others.len());
    let mut cmat = vec![vec![0.0; others.len()]; others.len()];
    for (col, &s) in others.iter().enumerate() {
        let terms = chain_combination(spec, &kerg.closures[s], w, k);
        let net = net_vector(spec, &terms);
        let mass = -net[s];
        let terms: Vec<(usize, f64)> = terms.into_iter().map(|(t, b)| (t, b / mass)).collect();
        for (row, &i) in others.iter().enumerate() {
            if i != s {
                cmat[row][col] = (net[i] / mass).max(0.0);
            }
        }
        combos.push(terms);
    }
    let mut rhs = vec![0.0; others.len()];
    rhs[others.iter().position(|&s| s == u).unwrap()] = 1.0;
    let theta = solve_nonneg_linear_cols(&cmat, &rhs)?;

    let mut terms: Vec<(usize, f64)> = Vec::new();
    for (th, combo) in theta.iter().zip(&combos) {
        if *th <= 0.0 {
            continue;
        }
        for &(t, a) in combo {
            match terms.iter_mut().find(|(s, _)| *s == t) {
                Some(e) => e.1 += th * a,
                None => terms.push((t, th * a)),
            }
        }
    }
    cancel_opposites(spec, &mut terms);
    let mut target = vec![0.0; d];
    target[w] += 1.0;
    target[u] -= 1.0;
    let net = net_vector(spec, &terms);
    let residual = net
        .iter()
        .zip(&target)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(Representation {
        u,
        w,
        terms,
        residual,
    })
}

fn chain_combination(spec: &ModelSpec, closure: &AccessibilityClosure, w: usize, k: f64) -> Vec<(usize, f64)> {
    let chain = closure.chain(spec, w).expect("ergodic model reaches every state");
    let steps = chain.len() - 1;
    let mut b = vec![0.0; steps];
    b[steps - 1] = 1.0;
    for m in (0..steps.saturating_sub(1)).rev() {
        let t = &spec.transitions()[chain[m].1];
        let next = chain[m + 1].0;
        let kappa = t.to.iter().filter(|&&j| j == next).count() as f64 / t.k() as f64;
        b[m] = k * b[m + 1..].iter().sum::<f64>() / kappa;
    }
    chain[..steps].iter().zip(b).map(|(&(_, t), bm)| (t, bm)).collect()
}

fn net_vector(spec: &ModelSpec, terms: &[(usize, f64)]) -> Vec<f64> {
    let d = spec.d();
    let mut out = vec![0.0; d];
    for &(t, a) in terms {
        let v = spec.transitions()[t].direction(d);
        for (o, &vi) in out.iter_mut().zip(v.delta()) {
            *o += a * vi as f64;
        }
    }
    out
}

fn cancel_opposites(spec: &ModelSpec, terms: &mut Vec<(usize, f64)>) {
    let d = spec.d();
    let dirs: Vec<_> = terms.iter().map(|&(t, _)| spec.transitions()[t].direction(d)).collect();
    for a in 0..terms.len() {
        for b in a + 1..terms.len() {
            if dirs[a] == dirs[b].negated() {
                let m = terms[a].1.min(terms[b].1);
                terms[a].1 -= m;
                terms[b].1 -= m;
            }
        }
    }
    terms.retain(|&(_, a)| a > 1e-14);
}
