//! Werner-parameter bookkeeping for entanglement swapping, dilution and purification.
//!
//! Every state in the model is a Werner state (pure states are first twirled
//! into one), so the whole edge pipeline reduces to scalar maps on the Werner
//! parameter `p`, with fidelity `F = (3p + 1) / 4`.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

mod pump;

/// Werner parameter of a two-qubit Werner state, always in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WernerParam<T>(T);

impl<T: Scalar> WernerParam<T> {
    pub fn new(value: T) -> Result<Self> {
        if value >= T::zero() && value <= T::one() {
            Ok(Self(value))
        } else {
            Err(Error::Domain {
                what: "Werner parameter",
                value: value.as_f64(),
            })
        }
    }

    pub fn one() -> Self {
        Self(T::one())
    }

    pub fn value(self) -> T {
        self.0
    }

    pub fn fidelity(self) -> T {
        fidelity_from_werner(self)
    }
}

pub fn fidelity_from_werner<T: Scalar>(p: WernerParam<T>) -> T {
    (T::lit(3.0) * p.0 + T::one()) / T::lit(4.0)
}

pub fn werner_from_fidelity<T: Scalar>(fidelity: T) -> Result<WernerParam<T>> {
    if !(fidelity >= T::lit(0.25) && fidelity <= T::one()) {
        return Err(Error::Domain {
            what: "fidelity",
            value: fidelity.as_f64(),
        });
    }
    // Clamp the last ulp so F = 1 maps to exactly p = 1.
    let p = ((T::lit(4.0) * fidelity - T::one()) / T::lit(3.0)).min(T::one());
    WernerParam::new(p.max(T::zero()))
}

/// Werner parameter of the twirled pure state `sqrt(l)|00> + sqrt(1-l)|11>`.
pub fn pure_state_werner<T: Scalar>(lambda0: T) -> Result<WernerParam<T>> {
    if !(lambda0 >= T::zero() && lambda0 <= T::one()) {
        return Err(Error::Domain {
            what: "Schmidt coefficient",
            value: lambda0.as_f64(),
        });
    }
    let concurrence_half = (lambda0 * (T::one() - lambda0)).sqrt();
    let p = (T::lit(4.0) * concurrence_half + T::one()) / T::lit(3.0);
    WernerParam::new(p.min(T::one()))
}

/// Binary entropy in bits; `H(0) = H(1) = 0`.
pub fn binary_entropy<T: Scalar>(lambda: T) -> T {
    let term = |x: T| {
        if x <= T::zero() {
            T::zero()
        } else {
            -x * x.log2()
        }
    };
    term(lambda) + term(T::one() - lambda)
}

/// Schmidt coefficient `l` in `(0, 1/2]` reached by diluting Bell pairs to a load `y >= 1`,
/// i.e. the root of `H(l) = 1/y`.
///
/// Bracketed Newton iteration: every step stays inside the shrinking bisection
/// bracket, so it never does worse than plain bisection.
pub fn dilution_lambda<T: Scalar>(y: T) -> Result<T> {
    if !(y >= T::one()) || !y.is_finite() {
        return Err(Error::Domain {
            what: "dilution load",
            value: y.as_f64(),
        });
    }
    let half = T::lit(0.5);
    if y == T::one() {
        return Ok(half);
    }
    let target = y.recip();
    let tol = T::solve_tol();
    let (mut lo, mut hi) = (T::zero(), half);
    // Start where the small-lambda asymptote `-l log2 l ~ target` puts the root.
    let mut lambda = (target / (T::one() + target.recip().log2())).min(half * T::lit(0.99));
    for _ in 0..200 {
        let residual = binary_entropy(lambda) - target;
        if residual.abs() <= tol {
            return Ok(lambda);
        }
        if residual > T::zero() {
            hi = lambda;
        } else {
            lo = lambda;
        }
        let slope = ((T::one() - lambda) / lambda).log2();
        let newton = lambda - residual / slope;
        lambda = if slope > T::zero() && newton > lo && newton < hi {
            newton
        } else {
            (lo + hi) * half
        };
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    Ok(lambda)
}

/// Expected Werner parameter delivered by a Bell-state edge at normalized load `y`.
///
/// A surplus of Bell pairs cannot raise fidelity further; a deficit is covered
/// by asymptotic dilution into weaker pure states.
pub fn bell_response_g1<T: Scalar>(y: T) -> Result<WernerParam<T>> {
    if !(y > T::zero()) {
        return Err(Error::Domain {
            what: "edge load",
            value: y.as_f64(),
        });
    }
    if y <= T::one() {
        return Ok(WernerParam::one());
    }
    pure_state_werner(dilution_lambda(y)?)
}

/// One BBPSSW round on `rho_W(p1) (x) rho_W(p2)`: the output parameter and
/// the success probability.
pub fn purify_pair<T: Scalar>(p1: WernerParam<T>, p2: WernerParam<T>) -> (WernerParam<T>, T) {
    let (a, b) = (p1.0, p2.0);
    let ab = a * b;
    let p = (a + b + T::lit(4.0) * ab) / (T::lit(3.0) * (T::one() + ab));
    let success = (T::one() + ab) / T::lit(2.0);
    (WernerParam(p.min(T::one())), success)
}

/// Number of states in the reference ensemble the pump expectation is taken over.
pub const PUMP_ENSEMBLE_SIZE: u32 = 1000;

fn check_purifiable<T: Scalar>(p0: T) -> Result<()> {
    if p0 > T::one() / T::lit(3.0) && p0 < T::one() {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "purifiable Werner parameter",
            value: p0.as_f64(),
        })
    }
}

/// Expected Werner parameter left on a Werner edge whose states are pumped
/// until only the fraction `y` of the original ensemble remains.
pub fn werner_pump<T: Scalar>(p0: WernerParam<T>, y: T) -> Result<WernerParam<T>> {
    check_purifiable(p0.0)?;
    if !(y > T::zero() && y <= T::one()) {
        return Err(Error::Domain {
            what: "pump fraction",
            value: y.as_f64(),
        });
    }
    if y == T::one() {
        return Ok(p0);
    }
    let threshold = pump::threshold_for(y.as_f64(), PUMP_ENSEMBLE_SIZE);
    let mean = pump::expected_profile(p0.0.as_f64(), PUMP_ENSEMBLE_SIZE, &[threshold])[0];
    Ok(WernerParam(T::lit(mean).min(T::one()).max(p0.0)))
}

pub const TABLE_MIN_LOAD: f64 = 1e-3;
pub const TABLE_POINTS: usize = 256;

/// Tabulated underload response of a Werner edge on `[TABLE_MIN_LOAD, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeResponseTable<T> {
    p0: T,
    grid: Vec<T>,
    values: Vec<T>,
}

impl<T: Scalar> EdgeResponseTable<T> {
    pub fn build(p0: WernerParam<T>) -> Result<Self> {
        check_purifiable(p0.0)?;
        let min = T::lit(TABLE_MIN_LOAD);
        let last = T::lit((TABLE_POINTS - 1) as f64);
        let mut grid: Vec<T> = (0..TABLE_POINTS)
            .map(|k| min.powf(T::one() - T::lit(k as f64) / last))
            .collect();
        grid[0] = min;
        grid[TABLE_POINTS - 1] = T::one();

        let thresholds: Vec<u32> = grid
            .iter()
            .map(|y| pump::threshold_for(y.as_f64(), PUMP_ENSEMBLE_SIZE))
            .collect();
        let mut values: Vec<T> = pump::expected_profile(p0.0.as_f64(), PUMP_ENSEMBLE_SIZE, &thresholds)
            .into_iter()
            .map(|v| T::lit(v).min(T::one()).max(p0.0))
            .collect();
        values[TABLE_POINTS - 1] = p0.0;
        Ok(Self {
            p0: p0.0,
            grid,
            values,
        })
    }

    pub fn p0(&self) -> T {
        self.p0
    }

    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn min_load(&self) -> T {
        self.grid[0]
    }

    /// Piecewise-linear lookup; loads below the grid are clamped to its first point.
    pub fn lookup(&self, y: T) -> T {
        if y <= self.grid[0] {
            return self.values[0];
        }
        if y >= T::one() {
            return self.p0;
        }
        let hi = self.grid.partition_point(|&g| g < y);
        let lo = hi - 1;
        let (g0, g1) = (self.grid[lo], self.grid[hi]);
        let t = (y - g0) / (g1 - g0);
        self.values[lo] + t * (self.values[hi] - self.values[lo])
    }
}

/// Expected Werner parameter delivered by a Werner edge with initial parameter
/// `p0` at normalized load `y`.
///
/// Overload spreads the `M` states over `m > M` users, giving `p0 * M / m`;
/// underload pumps the surplus into the delivered pairs.
pub fn werner_response_g2<T: Scalar>(
    p0: WernerParam<T>,
    y: T,
    table: &EdgeResponseTable<T>,
) -> Result<WernerParam<T>> {
    if !(y > T::zero()) {
        return Err(Error::Domain {
            what: "edge load",
            value: y.as_f64(),
        });
    }
    if table.p0 != p0.0 {
        return Err(Error::Config(format!(
            "response table built for p0={} used with p0={}",
            table.p0, p0.0
        )));
    }
    if y >= T::one() {
        return Ok(WernerParam(p0.0 / y));
    }
    Ok(WernerParam(table.lookup(y)))
}

/// Load response of one edge, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub enum EdgeResponse<T> {
    Bell,
    Werner(Arc<EdgeResponseTable<T>>),
}

impl<T: Scalar> EdgeResponse<T> {
    /// Delivered Werner parameter at load `y >= 0`. Zero load is read as the
    /// smallest tabulated load, i.e. the value a single prospective user would see.
    pub fn eval(&self, y: T) -> T {
        match self {
            EdgeResponse::Bell => {
                if y <= T::one() {
                    T::one()
                } else {
                    bell_response_g1(y).map(WernerParam::value).unwrap_or(T::zero())
                }
            }
            EdgeResponse::Werner(table) => {
                if y >= T::one() {
                    table.p0 / y
                } else {
                    table.lookup(y)
                }
            }
        }
    }
}

fn table_cache() -> &'static RwLock<HashMap<u64, Arc<EdgeResponseTable<f64>>>> {
    static CACHE: OnceLock<RwLock<HashMap<u64, Arc<EdgeResponseTable<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Shared response table for `p0`, built once per process.
pub fn cached_table(p0: f64) -> Result<Arc<EdgeResponseTable<f64>>> {
    let key = p0.to_bits();
    if let Some(table) = table_cache().read().expect("table cache poisoned").get(&key) {
        return Ok(Arc::clone(table));
    }
    let table = Arc::new(EdgeResponseTable::build(WernerParam::new(p0)?)?);
    let mut cache = table_cache().write().expect("table cache poisoned");
    Ok(Arc::clone(cache.entry(key).or_insert(table)))
}

/// Werner parameter of the end-to-end pair obtained by swapping along `path`.
///
/// Factors are multiplied in sorted order so the result does not depend on
/// the order in which the path lists its edges.
pub fn path_parameter(
    path: &[usize],
    loads: &[f64],
    responses: &[EdgeResponse<f64>],
) -> Result<WernerParam<f64>> {
    if path.is_empty() {
        return Err(Error::Infeasible("empty path".into()));
    }
    let mut factors = Vec::with_capacity(path.len());
    for &edge in path {
        let (Some(&y), Some(response)) = (loads.get(edge), responses.get(edge)) else {
            return Err(Error::InvalidEdge {
                index: edge,
                edge_count: responses.len().min(loads.len()),
            });
        };
        if !(y > 0.0) {
            return Err(Error::Domain {
                what: "edge load",
                value: y,
            });
        }
        factors.push(response.eval(y));
    }
    Ok(WernerParam(sorted_product(&mut factors)))
}

pub(crate) fn sorted_product(factors: &mut [f64]) -> f64 {
    factors.sort_unstable_by(f64::total_cmp);
    factors.iter().product()
}
