//! Dense finite Markov chain numerics: stationary laws, absorbing chains and
//! discrete phase-type distributions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance for row sums and probability normalization.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Square row-stochastic matrix, `m[(from, to)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    m: DMatrix<f64>,
}

impl StochasticMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "transition matrix is {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        check_substochastic_rows(&m, None, true)?;
        Ok(Self { m })
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(n, n, f))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.m[(from, to)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Row vector times matrix.
    pub fn step(&self, dist: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for (i, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += p * self.m[(i, j)];
            }
        }
        out
    }
}

/// Checks entries in `[0, 1]` and row sums of `[t | a]`; `exact` asks for sums of 1.
fn check_substochastic_rows(t: &DMatrix<f64>, a: Option<&DMatrix<f64>>, exact: bool) -> Result<()> {
    for i in 0..t.nrows() {
        let mut sum = 0.0;
        let row = t.row(i);
        let extra = a.map(|a| a.row(i).iter().copied().collect::<Vec<_>>());
        for &v in row.iter().chain(extra.iter().flatten()) {
            if !(-STOCHASTIC_TOL..=1.0 + STOCHASTIC_TOL).contains(&v) || !v.is_finite() {
                return Err(Error::NotStochastic {
                    row: i,
                    detail: format!("has entry {v} outside [0, 1]"),
                });
            }
            sum += v;
        }
        if (exact && (sum - 1.0).abs() > STOCHASTIC_TOL) || sum > 1.0 + STOCHASTIC_TOL {
            return Err(Error::NotStochastic {
                row: i,
                detail: format!("sums to {sum}"),
            });
        }
    }
    Ok(())
}

/// Strongly connected components of the support graph that have no exit.
///
/// Classes are returned sorted by their smallest state.
pub fn closed_classes(p: &StochasticMatrix) -> Vec<Vec<usize>> {
    let n = p.dim();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| p.get(i, j) > 0.0).collect())
        .collect();
    let comp = strongly_connected(&adj);
    let ncomp = comp.iter().copied().max().map_or(0, |c| c + 1);
    let mut closed = vec![true; ncomp];
    for (i, succ) in adj.iter().enumerate() {
        if succ.iter().any(|&j| comp[j] != comp[i]) {
            closed[comp[i]] = false;
        }
    }
    let mut classes: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
    for (i, &c) in comp.iter().enumerate() {
        if closed[c] {
            classes[c].push(i);
        }
    }
    let mut classes: Vec<Vec<usize>> = classes.into_iter().filter(|c| !c.is_empty()).collect();
    classes.sort_by_key(|c| c[0]);
    classes
}

/// Iterative Tarjan; returns the component id of each vertex.
fn strongly_connected(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let mut next_index = 0;
    let mut next_comp = 0;

    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            if *pos < adj[v].len() {
                let w = adj[v][*pos];
                *pos += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

/// Stationary law of the chain restricted to `class`, zero elsewhere.
///
/// Uses Grassmann-Taksar-Heyman elimination, which avoids subtractions and
/// keeps full relative accuracy on nearly decomposable chains.
fn class_stationary(p: &StochasticMatrix, class: &[usize]) -> Result<Vec<f64>> {
    let k = class.len();
    let mut a = DMatrix::from_fn(k, k, |r, c| p.get(class[r], class[c]));
    for m in (1..k).rev() {
        let s: f64 = (0..m).map(|j| a[(m, j)]).sum();
        if s <= 0.0 {
            return Err(Error::Degenerate(format!("state {} cannot reach the rest of its class", class[m])));
        }
        for i in 0..m {
            a[(i, m)] /= s;
        }
        for i in 0..m {
            let f = a[(i, m)];
            if f == 0.0 {
                continue;
            }
            for j in 0..m {
                a[(i, j)] += f * a[(m, j)];
            }
        }
    }
    let mut sol = vec![0.0; k];
    sol[0] = 1.0;
    for m in 1..k {
        sol[m] = (0..m).map(|i| sol[i] * a[(i, m)]).sum();
    }
    let total: f64 = sol.iter().sum();
    let mut out = vec![0.0; p.dim()];
    for (i, &s) in class.iter().enumerate() {
        out[s] = sol[i] / total;
    }
    Ok(out)
}

/// Unique stationary distribution of a chain with a single closed class.
pub fn stationary_distribution(p: &StochasticMatrix) -> Result<Vec<f64>> {
    let classes = closed_classes(p);
    if classes.len() != 1 {
        return Err(Error::Reducible { classes });
    }
    let pi = class_stationary(p, &classes[0])?;
    let resid = stationary_residual(p, &pi);
    if resid > 1e-10 {
        return Err(Error::Degenerate(format!(
            "stationary residual {resid:e} exceeds 1e-10"
        )));
    }
    Ok(pi)
}

/// `max_j |(pi P)_j - pi_j|`.
pub fn stationary_residual(p: &StochasticMatrix, pi: &[f64]) -> f64 {
    p.step(pi)
        .iter()
        .zip(pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Cesaro-limit occupancy of a chain started from `initial`.
///
/// Equals [`stationary_distribution`] when there is a single closed class;
/// otherwise mixes the per-class stationary laws by their absorption
/// probabilities from `initial`.
pub fn limiting_distribution(p: &StochasticMatrix, initial: &[f64]) -> Result<Vec<f64>> {
    let n = p.dim();
    if initial.len() != n {
        return Err(Error::Dimension(format!(
            "initial law has {} entries for {n} states",
            initial.len()
        )));
    }
    let classes = closed_classes(p);
    if classes.len() == 1 {
        return stationary_distribution(p);
    }
    let mut in_class = vec![usize::MAX; n];
    for (k, c) in classes.iter().enumerate() {
        for &s in c {
            in_class[s] = k;
        }
    }
    let transient: Vec<usize> = (0..n).filter(|&s| in_class[s] == usize::MAX).collect();
    let mut weights = vec![0.0; classes.len()];
    for (s, &mu) in initial.iter().enumerate() {
        if in_class[s] != usize::MAX {
            weights[in_class[s]] += mu;
        }
    }
    if !transient.is_empty() {
        let t = DMatrix::from_fn(transient.len(), transient.len(), |r, c| {
            p.get(transient[r], transient[c])
        });
        let a = DMatrix::from_fn(transient.len(), classes.len(), |r, k| {
            classes[k].iter().map(|&s| p.get(transient[r], s)).sum()
        });
        let h = absorption_split(&t, &a)?;
        for (r, &s) in transient.iter().enumerate() {
            for (k, w) in weights.iter_mut().enumerate() {
                *w += initial[s] * h[(r, k)];
            }
        }
    }
    let mut out = vec![0.0; n];
    for (k, c) in classes.iter().enumerate() {
        if weights[k] <= 0.0 {
            continue;
        }
        let pi = class_stationary(p, c)?;
        for s in 0..n {
            out[s] += weights[k] * pi[s];
        }
    }
    Ok(out)
}

/// `(I - T)^{-1}` for a substochastic `T` with spectral radius below 1.
pub fn fundamental_matrix(t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = t.nrows();
    if n != t.ncols() {
        return Err(Error::Dimension(format!("T is {}x{}", n, t.ncols())));
    }
    let i_minus_t = DMatrix::identity(n, n) - t;
    let fund = i_minus_t
        .clone()
        .lu()
        .solve(&DMatrix::identity(n, n))
        .ok_or(Error::NonTerminating)?;
    // For nonnegative T the inverse exists and is nonnegative iff rho(T) < 1.
    if fund.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return Err(Error::NonTerminating);
    }
    let resid = (&i_minus_t * &fund - DMatrix::identity(n, n)).amax();
    if resid > 1e-10 * fund.amax().max(1.0) {
        return Err(Error::NonTerminating);
    }
    Ok(fund)
}

/// Absorption probabilities `(I - T)^{-1} A`, one row per transient start state.
pub fn absorption_split(t: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != t.nrows() {
        return Err(Error::Dimension(format!(
            "T has {} rows, A has {}",
            t.nrows(),
            a.nrows()
        )));
    }
    let n = t.nrows();
    let fund_solve = (DMatrix::identity(n, n) - t)
        .lu()
        .solve(a)
        .ok_or(Error::NonTerminating)?;
    if fund_solve.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return Err(Error::NonTerminating);
    }
    Ok(fund_solve)
}

/// Discrete phase-type law: absorption time of a terminating chain started
/// from `tau`, with transient kernel `t` and exit vector `a = 1 - t 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseType {
    tau: DVector<f64>,
    t: DMatrix<f64>,
    a: DVector<f64>,
}

impl PhaseType {
    pub fn new(tau: DVector<f64>, t: DMatrix<f64>, a: DVector<f64>) -> Result<Self> {
        let n = tau.len();
        if t.nrows() != n || t.ncols() != n || a.len() != n {
            return Err(Error::Dimension(format!(
                "tau has {n} phases, T is {}x{}, a has {}",
                t.nrows(),
                t.ncols(),
                a.len()
            )));
        }
        if tau.iter().any(|&v| v < 0.0) || (tau.sum() - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NotStochastic {
                row: 0,
                detail: format!("initial vector sums to {}", tau.sum()),
            });
        }
        let a_col = DMatrix::from_column_slice(n, 1, a.as_slice());
        check_substochastic_rows(&t, Some(&a_col), true)?;
        // Confirms termination.
        fundamental_matrix(&t)?;
        Ok(Self { tau, t, a })
    }

    /// Geometric law on `{1, 2, ...}` with continuation probability `t`.
    pub fn geometric(t: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, 1.0),
            DMatrix::from_element(1, 1, t),
            DVector::from_element(1, 1.0 - t),
        )
    }

    pub fn phases(&self) -> usize {
        self.tau.len()
    }

    pub fn tau(&self) -> &DVector<f64> {
        &self.tau
    }

    pub fn transient(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn exit(&self) -> &DVector<f64> {
        &self.a
    }

    /// `P[W = w] = tau^T T^{w-1} a`.
    pub fn pmf(&self, w: usize) -> Result<f64> {
        if w == 0 {
            return Err(Error::ZeroSupport(w));
        }
        let mut row = self.tau.transpose();
        for _ in 1..w {
            row = &row * &self.t;
        }
        Ok((row * &self.a)[(0, 0)].clamp(0.0, 1.0))
    }

    /// `E[W(W-1)...(W-k+1)] = k! tau^T T^{k-1} (I - T)^{-k} 1`.
    pub fn factorial_moment(&self, k: u32) -> f64 {
        if k == 0 {
            return 1.0;
        }
        let lu = (DMatrix::identity(self.phases(), self.phases()) - &self.t).lu();
        let mut v = DVector::from_element(self.phases(), 1.0);
        for _ in 0..k {
            v = lu.solve(&v).expect("phase-type checked for termination");
        }
        for _ in 1..k {
            v = &self.t * v;
        }
        let fact: f64 = (1..=k).map(f64::from).product();
        fact * self.tau.dot(&v)
    }

    /// Raw moment `E[W^m]` from factorial moments and Stirling numbers.
    pub fn moment(&self, m: u32) -> f64 {
        if m == 0 {
            return 1.0;
        }
        let stirling = stirling2_row(m);
        (1..=m)
            .map(|k| stirling[k as usize] * self.factorial_moment(k))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.factorial_moment(1)
    }

    /// Same chain started deterministically in phase `s`.
    pub fn conditional(&self, s: usize) -> Result<Self> {
        if s >= self.phases() {
            return Err(Error::BadIndex {
                index: s,
                len: self.phases(),
            });
        }
        let mut tau = DVector::zeros(self.phases());
        tau[s] = 1.0;
        Ok(Self {
            tau,
            t: self.t.clone(),
            a: self.a.clone(),
        })
    }

    /// Same chain with initial law `tau` restricted to `phases` and renormalized.
    pub fn restricted(&self, phases: &[usize]) -> Result<Self> {
        let mass: f64 = phases.iter().map(|&s| self.tau[s]).sum();
        if mass <= 0.0 {
            return Err(Error::Degenerate("restricted initial law has no mass".into()));
        }
        let mut tau = DVector::zeros(self.phases());
        for &s in phases {
            tau[s] = self.tau[s] / mass;
        }
        Ok(Self {
            tau,
            t: self.t.clone(),
            a: self.a.clone(),
        })
    }
}

/// Stirling numbers of the second kind `S(m, k)` for `k = 0..=m`.
pub fn stirling2_row(m: u32) -> Vec<f64> {
    let m = m as usize;
    let mut row = vec![0.0; m + 1];
    row[0] = 1.0;
    for n in 1..=m {
        let mut next = vec![0.0; m + 1];
        for k in 1..=n {
            next[k] = k as f64 * row[k] + row[k - 1];
        }
        row = next;
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(a: f64, b: f64) -> StochasticMatrix {
        StochasticMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0 - a, a, b, 1.0 - b])).unwrap()
    }

    #[test]
    fn symmetric_two_state() {
        let pi = stationary_distribution(&two_state(0.1, 0.1)).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-14 && (pi[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn birth_death_balance() {
        let (q01, q10) = (0.03, 0.2);
        let pi = stationary_distribution(&two_state(q01, q10)).unwrap();
        assert!((pi[0] - q10 / (q01 + q10)).abs() < 1e-14);
        assert!((pi[1] - q01 / (q01 + q10)).abs() < 1e-14);
    }

    #[test]
    fn reducible_chain_names_classes() {
        let p = StochasticMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.0, 0.0, 0.3, 0.4, 0.3, 0.0, 0.0, 1.0],
        ))
        .unwrap();
        match stationary_distribution(&p) {
            Err(Error::Reducible { classes }) => assert_eq!(classes, vec![vec![0], vec![2]]),
            other => panic!("expected reducible error, got {other:?}"),
        }
        let lim = limiting_distribution(&p, &[0.0, 1.0, 0.0]).unwrap();
        assert!((lim[0] - 0.5).abs() < 1e-12 && (lim[2] - 0.5).abs() < 1e-12);
        assert_eq!(lim[1], 0.0);
    }

    #[test]
    fn transient_states_get_zero_mass() {
        let p = StochasticMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[0.5, 0.5, 0.0, 0.0, 0.2, 0.8, 0.0, 0.6, 0.4],
        ))
        .unwrap();
        let pi = stationary_distribution(&p).unwrap();
        assert_eq!(pi[0], 0.0);
        assert!((pi[1] - 0.6 / 1.4).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_stochastic() {
        let m = DMatrix::from_row_slice(2, 2, &[0.5, 0.4, 0.5, 0.5]);
        assert!(matches!(StochasticMatrix::new(m), Err(Error::NotStochastic { row: 0, .. })));
    }

    #[test]
    fn fundamental_scalar_and_zero() {
        let f = fundamental_matrix(&DMatrix::from_element(1, 1, 0.5)).unwrap();
        assert!((f[(0, 0)] - 2.0).abs() < 1e-15);
        let z = fundamental_matrix(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(z, DMatrix::identity(3, 3));
    }

    #[test]
    fn fundamental_singular() {
        assert!(matches!(
            fundamental_matrix(&DMatrix::from_element(1, 1, 1.0)),
            Err(Error::NonTerminating)
        ));
    }

    #[test]
    fn geometric_pmf_and_moments() {
        let g = PhaseType::geometric(0.5).unwrap();
        assert!((g.pmf(3).unwrap() - 0.125).abs() < 1e-15);
        assert!(matches!(g.pmf(0), Err(Error::ZeroSupport(0))));
        assert!((g.moment(1) - 2.0).abs() < 1e-14);
        assert!((g.moment(2) - 6.0).abs() < 1e-13);
        assert_eq!(g.conditional(0).unwrap(), g);
        assert!(g.conditional(1).is_err());
    }

    #[test]
    fn trivial_absorption_split() {
        let s = absorption_split(&DMatrix::zeros(1, 1), &DMatrix::from_row_slice(1, 2, &[0.3, 0.7]))
            .unwrap();
        assert_eq!(s, DMatrix::from_row_slice(1, 2, &[0.3, 0.7]));
    }

    #[test]
    fn gamblers_ruin() {
        // Positions 1..3 of a fair walk on 0..4, absorbed at 0 (ruin) or 4.
        let t = DMatrix::from_row_slice(3, 3, &[0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0]);
        let a = DMatrix::from_row_slice(3, 2, &[0.5, 0.0, 0.0, 0.0, 0.0, 0.5]);
        let s = absorption_split(&t, &a).unwrap();
        for (i, ruin) in [0.75, 0.5, 0.25].iter().enumerate() {
            assert!((s[(i, 0)] - ruin).abs() < 1e-12);
            assert!((s[(i, 0)] + s[(i, 1)] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn stirling_rows() {
        assert_eq!(stirling2_row(3), vec![0.0, 1.0, 3.0, 1.0]);
        assert_eq!(stirling2_row(4), vec![0.0, 1.0, 7.0, 6.0, 1.0]);
    }
}
