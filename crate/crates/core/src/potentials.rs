//! The nonlinearities of the model: a convex singular barrier `f1` on
//! `(0, 1)`, a smooth (possibly nonconvex) perturbation `f2` on `[0, 1]`, and
//! the nonnegative coupling `g`.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A scalar function with its first two derivatives.
pub trait ScalarProfile: Debug + Send + Sync {
    fn value(&self, r: f64) -> f64;
    fn d1(&self, r: f64) -> f64;
    fn d2(&self, r: f64) -> f64;
}

/// Convex, nonnegative on `(0, 1)`, with a derivative that blows up at both ends.
pub trait ConvexBarrier: ScalarProfile {}

/// Smooth part of the potential; must report a bound on `|f2''|` over `[0, 1]`.
pub trait SmoothPart: ScalarProfile {
    fn d2_sup(&self) -> f64;
}

/// Nonnegative coupling between the order parameter and the chemical potential.
pub trait CouplingG: ScalarProfile {}

/// `alpha1 * (r ln r + (1 - r) ln(1 - r)) + alpha1 ln 2`.
///
/// The constant shift makes the minimum (at `r = 1/2`) exactly zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedEntropy {
    pub alpha1: f64,
}

impl ScalarProfile for ShiftedEntropy {
    fn value(&self, r: f64) -> f64 {
        let xlogx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
        self.alpha1 * (xlogx(r) + xlogx(1.0 - r) + std::f64::consts::LN_2)
    }

    fn d1(&self, r: f64) -> f64 {
        self.alpha1 * (r.ln() - (1.0 - r).ln())
    }

    fn d2(&self, r: f64) -> f64 {
        self.alpha1 / (r * (1.0 - r))
    }
}

impl ConvexBarrier for ShiftedEntropy {}

/// `alpha2 * r (1 - r) + alpha3 * r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticPerturbation {
    pub alpha2: f64,
    pub alpha3: f64,
}

impl ScalarProfile for QuadraticPerturbation {
    fn value(&self, r: f64) -> f64 {
        self.alpha2 * r * (1.0 - r) + self.alpha3 * r
    }

    fn d1(&self, r: f64) -> f64 {
        self.alpha2 * (1.0 - 2.0 * r) + self.alpha3
    }

    fn d2(&self, _r: f64) -> f64 {
        -2.0 * self.alpha2
    }
}

impl SmoothPart for QuadraticPerturbation {
    fn d2_sup(&self) -> f64 {
        2.0 * self.alpha2.abs()
    }
}

/// `g(r) = r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityCoupling;

impl ScalarProfile for IdentityCoupling {
    fn value(&self, r: f64) -> f64 {
        r
    }

    fn d1(&self, _r: f64) -> f64 {
        1.0
    }

    fn d2(&self, _r: f64) -> f64 {
        0.0
    }
}

impl CouplingG for IdentityCoupling {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticParams {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            alpha1: 1.0,
            alpha2: 0.5,
            alpha3: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub enum GChoice {
    Identity,
    Custom(Arc<dyn CouplingG>),
}

/// The triple `(f1, f2, g)`.
#[derive(Debug, Clone)]
pub struct PotentialSet {
    f1: Arc<dyn ConvexBarrier>,
    f2: Arc<dyn SmoothPart>,
    g: Arc<dyn CouplingG>,
}

const SAMPLES: usize = 1001;

impl PotentialSet {
    /// Assembles a potential set after sampling the structural assumptions:
    /// `f1 >= 0` and `f1'' >= 0` inside `(0, 1)`, `d2_sup` dominating `|f2''|`
    /// and `g >= 0` on `[0, 1]`.
    pub fn new(
        f1: Arc<dyn ConvexBarrier>,
        f2: Arc<dyn SmoothPart>,
        g: Arc<dyn CouplingG>,
    ) -> Result<Self> {
        let invalid = |name, reason: String| Error::InvalidParameter { name, reason };
        let d2_sup = f2.d2_sup();
        if !(d2_sup.is_finite() && d2_sup >= 0.0) {
            return Err(invalid(
                "f2.d2_sup",
                format!("must be finite and >= 0, got {d2_sup}"),
            ));
        }
        for k in 0..SAMPLES {
            let r = k as f64 / (SAMPLES - 1) as f64;
            let d2 = f2.d2(r).abs();
            if d2 > d2_sup {
                return Err(invalid(
                    "f2.d2_sup",
                    format!("|f2''({r})| = {d2} exceeds declared bound {d2_sup}"),
                ));
            }
            if g.value(r) < 0.0 {
                return Err(invalid("g", format!("g({r}) = {} is negative", g.value(r))));
            }
            if k > 0 && k < SAMPLES - 1 {
                if f1.value(r) < 0.0 {
                    return Err(invalid(
                        "f1",
                        format!("f1({r}) = {} is negative", f1.value(r)),
                    ));
                }
                if f1.d2(r) < 0.0 {
                    return Err(invalid(
                        "f1",
                        format!("f1''({r}) = {} is negative", f1.d2(r)),
                    ));
                }
            }
        }
        Ok(Self { f1, f2, g })
    }

    pub fn f1(&self) -> &dyn ConvexBarrier {
        self.f1.as_ref()
    }

    pub fn f2(&self) -> &dyn SmoothPart {
        self.f2.as_ref()
    }

    pub fn g(&self) -> &dyn CouplingG {
        self.g.as_ref()
    }

    /// `f = f1 + f2`.
    pub fn f(&self, r: f64) -> f64 {
        self.f1.value(r) + self.f2.value(r)
    }

    pub fn f_d1(&self, r: f64) -> f64 {
        self.f1.d1(r) + self.f2.d1(r)
    }

    pub fn f_d2(&self, r: f64) -> f64 {
        self.f1.d2(r) + self.f2.d2(r)
    }

    pub fn d2_sup(&self) -> f64 {
        self.f2.d2_sup()
    }
}

/// The double-well logarithmic potential with the requested coupling.
pub fn make_logistic_potentials(p: LogisticParams, g: GChoice) -> Result<PotentialSet> {
    if !(p.alpha1.is_finite() && p.alpha1 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "alpha1",
            reason: format!("must be > 0, got {}", p.alpha1),
        });
    }
    for (name, v) in [("alpha2", p.alpha2), ("alpha3", p.alpha3)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidParameter {
                name,
                reason: format!("must be >= 0, got {v}"),
            });
        }
    }
    let g: Arc<dyn CouplingG> = match g {
        GChoice::Identity => Arc::new(IdentityCoupling),
        GChoice::Custom(g) => g,
    };
    PotentialSet::new(
        Arc::new(ShiftedEntropy { alpha1: p.alpha1 }),
        Arc::new(QuadraticPerturbation {
            alpha2: p.alpha2,
            alpha3: p.alpha3,
        }),
        g,
    )
}

/// Largest step accepted by [`check_admissible_tau`], `+inf` when `f2'' = 0`.
pub fn max_admissible_tau(ps: &PotentialSet) -> f64 {
    let sup = ps.d2_sup();
    if sup == 0.0 {
        f64::INFINITY
    } else {
        0.5 / sup
    }
}

/// Accepts `tau` iff `tau * sup|f2''| <= 1/2`.
pub fn check_admissible_tau(tau: f64, ps: &PotentialSet) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("must be positive and finite, got {tau}"),
        });
    }
    if tau * ps.d2_sup() <= 0.5 {
        Ok(())
    } else {
        Err(Error::InadmissibleStep {
            tau,
            d2_sup: ps.d2_sup(),
            max_tau: max_admissible_tau(ps),
        })
    }
}
