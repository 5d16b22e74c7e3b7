//! Generator functions of the supported f-divergences, their Fenchel
//! conjugates, and the maps between class posteriors and optimal network
//! outputs.
//!
//! | id  | f(u)                          | f*(t)              | conjugate domain |
//! |-----|-------------------------------|--------------------|------------------|
//! | kl  | u log u                       | exp(t - 1)         | (-inf, inf)      |
//! | gan | u log u - (u + 1) log(u + 1)  | -log(1 - exp(t))   | (-inf, 0)        |
//! | sl  | -log(u + 1)                   | -(log(-t) + t)     | (-1, 0)          |
//!
//! The optimal network output for posterior `p` is `f'(p)`, and since
//! `(f*)' = (f')^-1` the posterior is recovered as `(f*)'(t)`.
//!
//! The `sl` conjugate above is the tabulated form. The supremum
//! `sup_u {ut - f(u)}` evaluates to `-1 - t - log(-t)`, one less; only the
//! derivatives enter posteriors and gradients so the offset is immaterial,
//! and [`brute_force_conjugate`] comparisons are made on derivatives.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An open interval `(lo, hi)`; infinite endpoints are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const REAL_LINE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

/// The supported divergences. Each variant carries the full bundle of
/// generator, conjugate and derivatives as methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    Kl,
    Gan,
    Sl,
}

impl Divergence {
    pub const ALL: [Divergence; 3] = [Divergence::Kl, Divergence::Gan, Divergence::Sl];

    pub fn id(&self) -> &'static str {
        match self {
            Divergence::Kl => "kl",
            Divergence::Gan => "gan",
            Divergence::Sl => "sl",
        }
    }

    /// Open interval on which the conjugate and its derivatives are evaluated.
    pub fn conj_domain(&self) -> Interval {
        match self {
            Divergence::Kl => Interval::REAL_LINE,
            Divergence::Gan => Interval {
                lo: f64::NEG_INFINITY,
                hi: 0.0,
            },
            Divergence::Sl => Interval { lo: -1.0, hi: 0.0 },
        }
    }

    /// Generator `f(u)`, `u > 0`.
    pub fn generator(&self, u: f64) -> Result<f64> {
        check_positive("generator", u)?;
        finite("generator", u, self.generator_unchecked(u))
    }

    /// First derivative of the generator, `f'(u)`, `u > 0`.
    pub fn generator_prime(&self, u: f64) -> Result<f64> {
        check_positive("generator derivative", u)?;
        finite("generator derivative", u, self.generator_prime_unchecked(u))
    }

    /// Second derivative of the generator, `f''(u)`, `u > 0`.
    pub fn generator_second(&self, u: f64) -> Result<f64> {
        check_positive("generator second derivative", u)?;
        finite(
            "generator second derivative",
            u,
            self.generator_second_unchecked(u),
        )
    }

    /// Fenchel conjugate `f*(t)` as tabulated.
    pub fn conj(&self, t: f64) -> Result<f64> {
        self.check_conj_domain("conjugate", t)?;
        finite("conjugate", t, self.conj_unchecked(t))
    }

    /// `(f*)'(t)`. Maps an optimal network output back to a posterior value.
    pub fn conj_prime(&self, t: f64) -> Result<f64> {
        self.check_conj_domain("conjugate derivative", t)?;
        finite("conjugate derivative", t, self.conj_prime_unchecked(t))
    }

    /// `(f*)''(t)`, strictly positive on the conjugate domain.
    pub fn conj_second(&self, t: f64) -> Result<f64> {
        self.check_conj_domain("conjugate second derivative", t)?;
        finite(
            "conjugate second derivative",
            t,
            self.conj_second_unchecked(t),
        )
    }

    /// Optimal network output `f'(p)` for a posterior value `p` in `(0, 1]`.
    pub fn optimal_t_from_posterior(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Domain {
                what: "posterior",
                value: p,
                domain: "(0, 1]".into(),
            });
        }
        self.generator_prime(p)
    }

    /// Posterior estimate `(f*)'(t)`; inverse of [`Self::optimal_t_from_posterior`].
    pub fn posterior_from_t(&self, t: f64) -> Result<f64> {
        self.conj_prime(t)
    }

    pub(crate) fn check_conj_domain(&self, what: &'static str, t: f64) -> Result<()> {
        let dom = self.conj_domain();
        if dom.contains(t) {
            Ok(())
        } else {
            Err(Error::Domain {
                what,
                value: t,
                domain: dom.to_string(),
            })
        }
    }

    pub(crate) fn generator_unchecked(&self, u: f64) -> f64 {
        match self {
            Divergence::Kl => u * u.ln(),
            Divergence::Gan => u * u.ln() - (u + 1.0) * u.ln_1p(),
            Divergence::Sl => -u.ln_1p(),
        }
    }

    pub(crate) fn generator_prime_unchecked(&self, u: f64) -> f64 {
        match self {
            Divergence::Kl => u.ln() + 1.0,
            // log(u / (u + 1)) written to stay accurate for large u
            Divergence::Gan => -(1.0 / u).ln_1p(),
            Divergence::Sl => -1.0 / (u + 1.0),
        }
    }

    pub(crate) fn generator_second_unchecked(&self, u: f64) -> f64 {
        match self {
            Divergence::Kl => 1.0 / u,
            Divergence::Gan => 1.0 / (u * (u + 1.0)),
            Divergence::Sl => 1.0 / ((u + 1.0) * (u + 1.0)),
        }
    }

    pub(crate) fn conj_unchecked(&self, t: f64) -> f64 {
        match self {
            Divergence::Kl => (t - 1.0).exp(),
            Divergence::Gan => -(-t.exp()).ln_1p(),
            Divergence::Sl => -((-t).ln() + t),
        }
    }

    pub(crate) fn conj_prime_unchecked(&self, t: f64) -> f64 {
        match self {
            Divergence::Kl => (t - 1.0).exp(),
            // e^t / (1 - e^t)
            Divergence::Gan => 1.0 / (-t).exp_m1(),
            Divergence::Sl => -1.0 / t - 1.0,
        }
    }

    pub(crate) fn conj_second_unchecked(&self, t: f64) -> f64 {
        match self {
            Divergence::Kl => (t - 1.0).exp(),
            Divergence::Gan => {
                let d = (-t).exp_m1();
                // e^t / (1 - e^t)^2 = e^{-t} / (e^{-t} - 1)^2
                (d + 1.0) / (d * d)
            }
            Divergence::Sl => 1.0 / (t * t),
        }
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Divergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(Divergence::Kl),
            "gan" => Ok(Divergence::Gan),
            "sl" => Ok(Divergence::Sl),
            other => Err(Error::param(format!(
                "unknown divergence {other:?} (expected kl, gan or sl)"
            ))),
        }
    }
}

fn check_positive(what: &'static str, u: f64) -> Result<()> {
    if u > 0.0 && u.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value: u,
            domain: "(0, inf)".into(),
        })
    }
}

fn finite(what: &'static str, arg: f64, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Domain {
            what,
            value: arg,
            domain: "arguments with a finite result".into(),
        })
    }
}

/// Lower end of the brute-force search grid.
pub const BRUTE_FORCE_U_MIN: f64 = 1e-6;

/// Precomputed log-spaced grid of `(u, f(u))` pairs used to evaluate
/// `sup_u {u t - f(u)}` by exhaustive search.
#[derive(Debug, Clone)]
pub struct ConjugateGrid {
    divergence: Divergence,
    u: Vec<f64>,
    fu: Vec<f64>,
}

impl ConjugateGrid {
    pub fn new(divergence: Divergence, u_max: f64, n_grid: usize) -> Result<Self> {
        if !(u_max > BRUTE_FORCE_U_MIN) {
            return Err(Error::param(format!(
                "u_max must exceed {BRUTE_FORCE_U_MIN}, got {u_max}"
            )));
        }
        if n_grid < 10_000 {
            return Err(Error::param(format!(
                "brute-force grid needs at least 1e4 points, got {n_grid}"
            )));
        }
        let (lo, hi) = (BRUTE_FORCE_U_MIN.ln(), u_max.ln());
        let step = (hi - lo) / (n_grid - 1) as f64;
        let u: Vec<f64> = (0..n_grid).map(|k| (lo + step * k as f64).exp()).collect();
        let fu = u
            .iter()
            .map(|&x| divergence.generator_unchecked(x))
            .collect();
        Ok(Self { divergence, u, fu })
    }

    pub fn divergence(&self) -> Divergence {
        self.divergence
    }

    /// Grid maximum of `u t - f(u)`.
    pub fn sup(&self, t: f64) -> Result<f64> {
        self.divergence
            .check_conj_domain("brute-force conjugate", t)?;
        Ok(self
            .u
            .iter()
            .zip(&self.fu)
            .map(|(&u, &fu)| u * t - fu)
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

/// `max u t - f(u)` over a log-spaced grid of `n_grid` points in `(1e-6, u_max)`.
///
/// Independent oracle for the conjugate; use [`ConjugateGrid`] directly when
/// evaluating many `t` against the same grid.
pub fn brute_force_conjugate(
    divergence: Divergence,
    t: f64,
    u_max: f64,
    n_grid: usize,
) -> Result<f64> {
    ConjugateGrid::new(divergence, u_max, n_grid)?.sup(t)
}
