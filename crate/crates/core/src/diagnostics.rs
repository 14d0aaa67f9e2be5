//! Time interpolants, exact discrete identities, free energy and the error
//! norms used to measure temporal convergence.

use crate::error::{Error, Result};
use crate::grid::{dot, inner_l2, norm_l2, same_grid, seminorm_h1_sq, Field};
use crate::potentials::PotentialSet;
use crate::stepper::Trajectory;

/// Values that can be interpolated in time and measured in a norm.
pub trait TimeNode: Clone {
    /// `a x + b y`.
    fn combine(a: f64, x: &Self, b: f64, y: &Self) -> Self;
    fn norm(&self) -> f64;
}

impl TimeNode for f64 {
    fn combine(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        a * x + b * y
    }

    fn norm(&self) -> f64 {
        self.abs()
    }
}

/// Fields are measured in `L2`.
impl TimeNode for Field {
    fn combine(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        debug_assert_eq!(x.grid(), y.grid());
        let values = x
            .values()
            .iter()
            .zip(y.values())
            .map(|(&u, &v)| a * u + b * v)
            .collect();
        Field::from_raw(*x.grid(), values)
    }

    fn norm(&self) -> f64 {
        norm_l2(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpKind {
    /// `z_n` on `((n-1) tau, n tau]`.
    Backward,
    /// `z_{n-1}` on `((n-1) tau, n tau]`.
    Forward,
    /// Piecewise linear through the nodes.
    Linear,
}

/// Backward/forward piecewise-constant and piecewise-linear reconstructions
/// of a node sequence `z_0, ..., z_N` on the lattice `n tau`.
#[derive(Debug, Clone)]
pub struct Interpolants<T> {
    tau: f64,
    nodes: Vec<T>,
}

impl<T: TimeNode> Interpolants<T> {
    pub fn new(nodes: Vec<T>, tau: f64) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidParameter {
                name: "nodes",
                reason: "need at least one node".into(),
            });
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!("must be positive, got {tau}"),
            });
        }
        Ok(Self { tau, nodes })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    /// Number of intervals `N`.
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn t_final(&self) -> f64 {
        self.intervals() as f64 * self.tau
    }

    /// Value on interval `I_n = ((n-1) tau, n tau)` at local coordinate `s` in `[0, 1]`.
    ///
    /// # Panics
    /// If `n` is not in `1..=N`.
    pub fn eval_in_interval(&self, kind: InterpKind, n: usize, s: f64) -> T {
        assert!(n >= 1 && n <= self.intervals(), "interval {n} out of range");
        let (prev, next) = (&self.nodes[n - 1], &self.nodes[n]);
        match kind {
            InterpKind::Backward => next.clone(),
            InterpKind::Forward => prev.clone(),
            InterpKind::Linear => T::combine(1.0 - s, prev, s, next),
        }
    }

    /// `d/dt` of the linear interpolant on `I_n`.
    pub fn derivative_in_interval(&self, n: usize) -> T {
        assert!(n >= 1 && n <= self.intervals(), "interval {n} out of range");
        T::combine(
            1.0 / self.tau,
            &self.nodes[n],
            -1.0 / self.tau,
            &self.nodes[n - 1],
        )
    }

    pub fn eval(&self, kind: InterpKind, t: f64) -> Result<T> {
        let t_max = self.t_final();
        let slack = 1e-12 * t_max.max(self.tau);
        if !(t >= -slack && t <= t_max + slack) {
            return Err(Error::TimeOutOfRange { t, t_max });
        }
        let n_total = self.intervals();
        if n_total == 0 {
            return Ok(self.nodes[0].clone());
        }
        let k = t / self.tau;
        let nearest = k.round();
        if (k - nearest).abs() <= 1e-9 {
            // On a lattice point: half-open intervals ((n-1) tau, n tau].
            let node = nearest as usize;
            return Ok(match kind {
                InterpKind::Linear => self.nodes[node].clone(),
                InterpKind::Backward => self.nodes[node.max(1)].clone(),
                InterpKind::Forward => self.nodes[node.max(1) - 1].clone(),
            });
        }
        let n = (k.ceil() as usize).clamp(1, n_total);
        let s = k - (n - 1) as f64;
        Ok(self.eval_in_interval(kind, n, s))
    }
}

fn max_relative_spread(values: &[f64]) -> f64 {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst = 0.0f64;
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            worst = worst.max((a - b).abs());
        }
    }
    worst / scale
}

/// Checks `||zbar - zhat||_{L inf} = max ||z_{n+1} - z_n|| = tau ||d_t zhat||_{L inf}`
/// (and the forward analogue); returns the largest relative discrepancy.
pub fn interp_identity_linf_residual<T: TimeNode>(nodes: &[T], tau: f64) -> Result<f64> {
    let interp = Interpolants::new(nodes.to_vec(), tau)?;
    let n_total = interp.intervals();
    if n_total == 0 {
        return Err(Error::InvalidParameter {
            name: "nodes",
            reason: "need at least two nodes".into(),
        });
    }
    let mut sup_backward = 0.0f64;
    let mut sup_forward = 0.0f64;
    let mut max_jump = 0.0f64;
    let mut max_rate = 0.0f64;
    for n in 1..=n_total {
        // |zbar - zhat| = (1 - s) |jump| peaks at the left end of the interval,
        // |zunder - zhat| = s |jump| at the right end.
        let lin0 = interp.eval_in_interval(InterpKind::Linear, n, 0.0);
        let lin1 = interp.eval_in_interval(InterpKind::Linear, n, 1.0);
        let bw = interp.eval_in_interval(InterpKind::Backward, n, 0.0);
        let fw = interp.eval_in_interval(InterpKind::Forward, n, 1.0);
        sup_backward = sup_backward.max(T::combine(1.0, &bw, -1.0, &lin0).norm());
        sup_forward = sup_forward.max(T::combine(1.0, &fw, -1.0, &lin1).norm());
        max_jump = max_jump.max(T::combine(1.0, &nodes[n], -1.0, &nodes[n - 1]).norm());
        max_rate = max_rate.max(interp.derivative_in_interval(n).norm());
    }
    Ok(max_relative_spread(&[
        sup_backward,
        sup_forward,
        max_jump,
        tau * max_rate,
    ]))
}

/// Checks `||zbar - zhat||^2_{L2} = tau/3 sum ||z_{n+1} - z_n||^2 = tau^2/3 ||d_t zhat||^2_{L2}`
/// (and the forward analogue); each side is computed on its own and the
/// largest relative discrepancy is returned.
pub fn interp_identity_l2_residual<T: TimeNode>(nodes: &[T], tau: f64) -> Result<f64> {
    let interp = Interpolants::new(nodes.to_vec(), tau)?;
    let n_total = interp.intervals();
    if n_total == 0 {
        return Err(Error::InvalidParameter {
            name: "nodes",
            reason: "need at least two nodes".into(),
        });
    }
    // Two-point Gauss-Legendre on [0, 1] integrates the quadratic integrands exactly.
    let offset = 0.5 / 3f64.sqrt();
    let gauss = [0.5 - offset, 0.5 + offset];
    let mut backward = 0.0;
    let mut forward = 0.0;
    let mut jumps = 0.0;
    let mut rates = 0.0;
    for n in 1..=n_total {
        for &s in &gauss {
            let lin = interp.eval_in_interval(InterpKind::Linear, n, s);
            let bw = interp.eval_in_interval(InterpKind::Backward, n, s);
            let fw = interp.eval_in_interval(InterpKind::Forward, n, s);
            backward += 0.5 * tau * T::combine(1.0, &bw, -1.0, &lin).norm().powi(2);
            forward += 0.5 * tau * T::combine(1.0, &fw, -1.0, &lin).norm().powi(2);
        }
        jumps += T::combine(1.0, &nodes[n], -1.0, &nodes[n - 1])
            .norm()
            .powi(2);
        rates += tau * interp.derivative_in_interval(n).norm().powi(2);
    }
    Ok(max_relative_spread(&[
        backward,
        forward,
        tau / 3.0 * jumps,
        tau * tau / 3.0 * rates,
    ]))
}

/// Relative defect of the summed energy identity
/// `int (1/2 + g_m) mu_m^2 + sum_{n<m} int (1/2 + g_n) (mu_{n+1} - mu_n)^2
///  + tau sum_{n<m} |mu_{n+1}|_1^2 = int (1/2 + g_0) mu_0^2`
/// for every `m = 1..=N`. Entry `m - 1` belongs to `m`.
pub fn energy_identity_residuals(traj: &Trajectory, ps: &PotentialSet) -> Result<Vec<f64>> {
    if !traj.stores_every_step() {
        return Err(Error::MissingSteps);
    }
    let vol = traj.grid().cell_volume();
    let weight = |rho: &Field, i: usize| 0.5 + ps.g().value(rho.values()[i]);
    let weighted_sq = |rho: &Field, u: &[f64]| -> f64 {
        u.iter()
            .enumerate()
            .map(|(i, v)| weight(rho, i) * v * v)
            .sum::<f64>()
            * vol
    };

    let s0 = &traj.states[0];
    let rhs = weighted_sq(&s0.rho, s0.mu.values());
    let mut accumulated = 0.0;
    let mut out = Vec::with_capacity(traj.steps);
    for pair in traj.states.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let jump: Vec<f64> = next
            .mu
            .values()
            .iter()
            .zip(prev.mu.values())
            .map(|(a, b)| a - b)
            .collect();
        accumulated += weighted_sq(&prev.rho, &jump) + traj.tau * seminorm_h1_sq(&next.mu);
        let lhs = weighted_sq(&next.rho, next.mu.values()) + accumulated;
        let diff = (lhs - rhs).abs();
        out.push(if rhs > 0.0 { diff / rhs } else { diff });
    }
    Ok(out)
}

pub fn energy_identity_residual(traj: &Trajectory, ps: &PotentialSet, m: usize) -> Result<f64> {
    if m == 0 || m > traj.steps {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: format!("must lie in 1..={}, got {m}", traj.steps),
        });
    }
    Ok(energy_identity_residuals(traj, ps)?[m - 1])
}

/// `sum_i [-(1/2 + g(rho_i)) mu_i + f(rho_i)] |cell| + 1/2 |rho|_1^2`.
pub fn free_energy(mu: &Field, rho: &Field, ps: &PotentialSet) -> Result<f64> {
    same_grid(mu, rho)?;
    if !(rho.min() > 0.0 && rho.max() < 1.0) {
        return Err(Error::InvalidParameter {
            name: "rho",
            reason: "free energy needs rho strictly inside (0, 1)".into(),
        });
    }
    let bulk: f64 = mu
        .values()
        .iter()
        .zip(rho.values())
        .map(|(&m, &r)| -(0.5 + ps.g().value(r)) * m + ps.f(r))
        .sum();
    Ok(bulk * rho.grid().cell_volume() + 0.5 * seminorm_h1_sq(rho))
}

/// Temporal error norms between two trajectories on the coarse lattice.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorNorms {
    /// `||d_t (rho_hat - rho_ref)||_{L2(0,T;L2)}`.
    pub rho_h1_h: f64,
    /// `max_n ||rho_n - rho_ref(n tau)||_V`.
    pub rho_linf_v: f64,
    /// `max_n ||mu_n - mu_ref(n tau)||_{L2}`.
    pub mu_linf_h: f64,
    /// `||mu_hat - mu_ref||_{L2(0,T;V)}` of the piecewise-linear difference.
    pub mu_l2_v: f64,
}

impl ErrorNorms {
    pub fn rho_part(&self) -> f64 {
        self.rho_h1_h + self.rho_linf_v
    }

    pub fn mu_part(&self) -> f64 {
        self.mu_linf_h + self.mu_l2_v
    }

    pub fn total(&self) -> f64 {
        self.rho_part() + self.mu_part()
    }
}

fn inner_v(a: &Field, b: &Field) -> f64 {
    let grid = a.grid();
    let mut la = vec![0.0; grid.len()];
    grid.apply_laplacian(a.values(), &mut la);
    (dot(a.values(), b.values()) - dot(&la, b.values())) * grid.cell_volume()
}

/// Compares `traj` with a finer reference run restricted to the coarse nodes.
pub fn error_norms(traj: &Trajectory, reference: &Trajectory) -> Result<ErrorNorms> {
    if traj.grid() != reference.grid() {
        return Err(Error::GridMismatch);
    }
    if !traj.stores_every_step() || !reference.stores_every_step() {
        return Err(Error::MissingSteps);
    }
    let ratio = traj.tau / reference.tau;
    let stride = ratio.round();
    if stride < 1.0 || (ratio - stride).abs() > 1e-9 * stride {
        return Err(Error::LadderNotNested(format!(
            "reference step {} does not divide {}",
            reference.tau, traj.tau
        )));
    }
    let stride = stride as usize;
    if traj.steps * stride != reference.steps {
        return Err(Error::LadderNotNested(format!(
            "final times differ: {} steps of {} vs {} steps of {}",
            traj.steps, traj.tau, reference.steps, reference.tau
        )));
    }

    let tau = traj.tau;
    let mut rho_err = Vec::with_capacity(traj.steps + 1);
    let mut mu_err = Vec::with_capacity(traj.steps + 1);
    for (n, s) in traj.states.iter().enumerate() {
        let r = &reference.states[n * stride];
        rho_err.push(s.rho.sub(&r.rho)?);
        mu_err.push(s.mu.sub(&r.mu)?);
    }

    let mut norms = ErrorNorms::default();
    for e in &rho_err {
        let l2 = norm_l2(e);
        norms.rho_linf_v = norms.rho_linf_v.max((l2 * l2 + seminorm_h1_sq(e)).sqrt());
    }
    for e in &mu_err {
        norms.mu_linf_h = norms.mu_linf_h.max(norm_l2(e));
    }
    let mut h1 = 0.0;
    let mut l2v = 0.0;
    for n in 1..rho_err.len() {
        let d = rho_err[n].sub(&rho_err[n - 1])?;
        h1 += norm_l2(&d).powi(2) / tau;
        let (a, b) = (&mu_err[n - 1], &mu_err[n]);
        l2v += tau / 3.0 * (inner_v(a, a) + inner_v(a, b) + inner_v(b, b));
    }
    norms.rho_h1_h = h1.sqrt();
    norms.mu_l2_v = l2v.max(0.0).sqrt();
    Ok(norms)
}

/// `int (1 + gamma_n + gamma_{n+1}) mu_{n+1} - int (1 + 2 gamma_n) mu_n` for
/// every stored step pair, relative to the second term; recomputed from the
/// stored fields.
pub fn mass_identity_residuals(traj: &Trajectory, ps: &PotentialSet) -> Result<Vec<f64>> {
    if !traj.stores_every_step() {
        return Err(Error::MissingSteps);
    }
    let mut out = Vec::with_capacity(traj.steps);
    for pair in traj.states.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let g0 = prev.rho.map(|r| ps.g().value(r))?;
        let g1 = next.rho.map(|r| ps.g().value(r))?;
        let lhs_w = g0.zip_with(&g1, |a, b| 1.0 + a + b)?;
        let rhs_w = g0.map(|a| 1.0 + 2.0 * a)?;
        let lhs = inner_l2(&lhs_w, &next.mu)?;
        let rhs = inner_l2(&rhs_w, &prev.mu)?;
        let diff = (lhs - rhs).abs();
        out.push(if rhs.abs() > 0.0 {
            diff / rhs.abs()
        } else {
            diff
        });
    }
    Ok(out)
}
