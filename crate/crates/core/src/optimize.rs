//! Derivative-free minimization over products of scaled simplices
//! `{x >= 0, sum(x[block]) = total}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One simplex block of the decision vector: `x[start..start + len]` sums to `total`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block<T> {
    pub start: usize,
    pub len: usize,
    pub total: T,
}

/// Consecutive blocks covering the whole decision vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks<T> {
    blocks: Vec<Block<T>>,
    dim: usize,
}

impl<T: Scalar> Blocks<T> {
    /// Blocks from `(len, total)` pairs laid out back to back.
    pub fn new(spec: &[(usize, T)]) -> Result<Self> {
        let mut blocks = Vec::with_capacity(spec.len());
        let mut start = 0;
        for &(len, total) in spec {
            if len == 0 {
                return Err(Error::Config("empty simplex block".into()));
            }
            if !(total > T::zero()) {
                return Err(Error::Domain {
                    what: "block total",
                    value: total.as_f64(),
                });
            }
            blocks.push(Block { start, len, total });
            start += len;
        }
        Ok(Self { blocks, dim: start })
    }

    pub fn single(len: usize, total: T) -> Result<Self> {
        Self::new(&[(len, total)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn iter(&self) -> impl Iterator<Item = &Block<T>> {
        self.blocks.iter()
    }

    /// Dimension of the affine hull of the feasible set.
    fn free_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.len - 1).sum()
    }

    fn reduce(&self, x: &[T]) -> Vec<T> {
        self.blocks
            .iter()
            .flat_map(|b| x[b.start..b.start + b.len - 1].iter().copied())
            .collect()
    }

    fn expand(&self, z: &[T]) -> Vec<T> {
        let mut x = Vec::with_capacity(self.dim);
        let mut offset = 0;
        for b in &self.blocks {
            let free = &z[offset..offset + b.len - 1];
            let rest = b.total - free.iter().copied().sum::<T>();
            x.extend_from_slice(free);
            x.push(rest);
            offset += b.len - 1;
        }
        x
    }

    /// Uniform split of every block.
    pub fn uniform(&self) -> Vec<T> {
        let mut x = vec![T::zero(); self.dim];
        for b in &self.blocks {
            let share = b.total / T::lit(b.len as f64);
            x[b.start..b.start + b.len].fill(share);
        }
        x
    }
}

/// Euclidean projection of `v` onto `{x >= 0, sum x = total}` (sort and threshold).
pub fn project_simplex<T: Scalar>(v: &[T], total: T) -> Result<Vec<T>> {
    if !(total > T::zero()) {
        return Err(Error::Domain {
            what: "simplex total",
            value: total.as_f64(),
        });
    }
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumulative = T::zero();
    let mut theta = T::zero();
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - total) / T::lit((i + 1) as f64);
        if u - candidate > T::zero() {
            theta = candidate;
        }
    }
    let mut x: Vec<T> = v.iter().map(|&u| (u - theta).max(T::zero())).collect();
    // Absorb rounding so the sum is exact to the last few ulps.
    let sum: T = x.iter().copied().sum();
    let drift = sum - total;
    if drift != T::zero() {
        if let Some(big) = x
            .iter_mut()
            .max_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
        {
            *big = (*big - drift).max(T::zero());
        }
    }
    Ok(x)
}

/// Blockwise projection onto the feasible set. Idempotent.
pub fn project_feasible<T: Scalar>(x: &[T], blocks: &Blocks<T>) -> Result<Vec<T>> {
    if x.len() != blocks.dim() {
        return Err(Error::Config(format!(
            "vector of length {} does not match {} block coordinates",
            x.len(),
            blocks.dim()
        )));
    }
    let mut out = Vec::with_capacity(x.len());
    for b in blocks.iter() {
        out.extend(project_simplex(&x[b.start..b.start + b.len], b.total)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalMethod {
    /// Simplex-reflection search in the reduced coordinates of the feasible set.
    NelderMead,
    /// Pairwise flow shifts along finite-difference descent pairs with golden-section steps.
    PairwiseShift,
    /// Nelder-Mead followed by pairwise shifts from its result.
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub hop_count: usize,
    pub hop_step: f64,
    pub temperature: f64,
    pub local_tol: f64,
    pub local_max_evals: usize,
    pub seed: u64,
    pub local_method: LocalMethod,
    /// Hopping stops early once the best value reaches this.
    pub target: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            hop_count: 100,
            hop_step: 0.1,
            temperature: 1e-4,
            local_tol: 1e-10,
            local_max_evals: 50_000,
            seed: 0,
            local_method: LocalMethod::NelderMead,
            target: None,
        }
    }
}

impl OptimizerConfig {
    /// Defaults with the perturbation scaled to a demand of `nu`.
    pub fn for_demand(nu: f64) -> Self {
        Self {
            hop_step: 0.1 * nu,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hop_step", self.hop_step),
            ("temperature", self.temperature),
            ("local_tol", self.local_tol),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if self.local_max_evals == 0 {
            return Err(Error::Config("local_max_evals must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult<T> {
    pub x: Vec<T>,
    pub value: T,
    pub evals: usize,
    /// False when the evaluation cap stopped the search.
    pub converged: bool,
}

struct Counted<'a, T> {
    f: &'a dyn Fn(&[T]) -> T,
    evals: usize,
}

impl<T: Scalar> Counted<'_, T> {
    fn eval(&mut self, x: &[T]) -> T {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    }
}

/// Nelder-Mead (adaptive coefficients) on the reduced coordinates of the
/// feasible set; every trial point is projected before evaluation.
pub fn local_minimize<T: Scalar>(
    objective: &dyn Fn(&[T]) -> T,
    x0: &[T],
    blocks: &Blocks<T>,
    config: &OptimizerConfig,
) -> Result<LocalResult<T>> {
    config.validate()?;
    let start = project_feasible(x0, blocks)?;
    let dim = blocks.free_dim();
    let mut counted = Counted { f: objective, evals: 0 };
    if dim == 0 {
        let value = counted.eval(&start);
        return Ok(LocalResult {
            x: start,
            value,
            evals: 1,
            converged: true,
        });
    }

    let point = |z: &[T]| project_feasible(&blocks.expand(z), blocks).expect("blocks match");
    let n = T::lit(dim as f64);
    let (alpha, beta) = (T::one(), T::one() + T::lit(2.0) / n);
    let gamma = T::lit(0.75) - T::lit(0.5) / n;
    let delta = T::one() - T::one() / n;
    let tol = T::lit(config.local_tol);

    let z0 = blocks.reduce(&start);
    let scale = blocks
        .iter()
        .map(|b| b.total)
        .fold(T::zero(), T::max)
        * T::lit(0.05);
    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(dim + 1);
    let f0 = counted.eval(&point(&z0));
    simplex.push((z0.clone(), f0));
    for i in 0..dim {
        let mut z = z0.clone();
        // Step towards the interior so the vertex is not clipped away.
        z[i] = if z[i] > scale { z[i] - scale } else { z[i] + scale };
        let f = counted.eval(&point(&z));
        simplex.push((z, f));
    }

    let stall_window = 20 * (dim + 1);
    let mut since_improvement = 0usize;
    let mut best_seen = f0;
    let mut converged = false;
    while counted.evals < config.local_max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        if best < best_seen - tol * (T::one() + best_seen.abs()) {
            best_seen = best;
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        let diameter = simplex[1..]
            .iter()
            .map(|(z, _)| {
                z.iter()
                    .zip(&simplex[0].0)
                    .map(|(&a, &b)| (a - b).abs())
                    .fold(T::zero(), T::max)
            })
            .fold(T::zero(), T::max);
        if diameter < tol || since_improvement > stall_window {
            converged = true;
            break;
        }

        let mut centroid = vec![T::zero(); dim];
        for (z, _) in &simplex[..dim] {
            for (c, &v) in centroid.iter_mut().zip(z) {
                *c += v / n;
            }
        }
        let along = |coef: T| -> Vec<T> {
            centroid
                .iter()
                .zip(&simplex[dim].0)
                .map(|(&c, &w)| c + coef * (c - w))
                .collect()
        };
        let worst = simplex[dim].1;
        let second_worst = simplex[dim - 1].1;

        let zr = along(alpha);
        let fr = counted.eval(&point(&zr));
        if fr < best {
            let ze = along(beta);
            let fe = counted.eval(&point(&ze));
            simplex[dim] = if fe < fr { (ze, fe) } else { (zr, fr) };
            continue;
        }
        if fr < second_worst {
            simplex[dim] = (zr, fr);
            continue;
        }
        let (zc, fc) = if fr < worst {
            let zc = along(gamma);
            let fc = counted.eval(&point(&zc));
            (zc, fc)
        } else {
            let zc = along(-gamma);
            let fc = counted.eval(&point(&zc));
            (zc, fc)
        };
        if fc < worst.min(fr) {
            simplex[dim] = (zc, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            for (v, &a) in vertex.0.iter_mut().zip(&anchor) {
                *v = a + delta * (*v - a);
            }
            vertex.1 = counted.eval(&point(&vertex.0));
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let x = point(&simplex[0].0);
    let value = simplex[0].1;
    Ok(LocalResult {
        x,
        value,
        evals: counted.evals,
        converged,
    })
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Minimizes `phi` on `[0, hi]` by golden-section search, also checking the endpoint.
fn golden_section<T: Scalar>(phi: &mut dyn FnMut(T) -> T, hi: T, tol: T) -> (T, T) {
    let g = T::lit(GOLDEN);
    let (mut a, mut b) = (T::zero(), hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    for _ in 0..100 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = phi(d);
        }
    }
    let (t, ft) = if fc < fd { (c, fc) } else { (d, fd) };
    let f_hi = phi(hi);
    if f_hi < ft {
        (hi, f_hi)
    } else {
        (t, ft)
    }
}

/// Descent by pairwise flow shifts: forward differences rank the coordinates of
/// each block, flow moves from the steepest-ascent used coordinate to the
/// steepest-descent one, and a golden-section search picks the amount.
///
/// The objective is probed at points up to a tiny step off the simplex, so it
/// must be defined on a neighbourhood of the nonnegative orthant.
pub fn pairwise_shift<T: Scalar>(
    objective: &dyn Fn(&[T]) -> T,
    x0: &[T],
    blocks: &Blocks<T>,
    config: &OptimizerConfig,
) -> Result<LocalResult<T>> {
    config.validate()?;
    let mut counted = Counted { f: objective, evals: 0 };
    let mut x = project_feasible(x0, blocks)?;
    let mut fx = counted.eval(&x);
    let tol = T::lit(config.local_tol);
    let scale = blocks.iter().map(|b| b.total).fold(T::zero(), T::max);
    let h = T::lit(1e-7) * scale;
    let used = T::lit(1e-12) * scale;
    let mut converged = false;

    while counted.evals < config.local_max_evals {
        let mut grad = vec![T::zero(); x.len()];
        let mut probe = x.clone();
        for k in 0..x.len() {
            probe[k] = x[k] + h;
            grad[k] = (counted.eval(&probe) - fx) / h;
            probe[k] = x[k];
        }
        // Best (gap, from, to) across blocks.
        let mut pick: Option<(T, usize, usize)> = None;
        for b in blocks.iter() {
            let range = b.start..b.start + b.len;
            let to = range
                .clone()
                .min_by(|&i, &j| grad[i].partial_cmp(&grad[j]).unwrap_or(std::cmp::Ordering::Equal));
            let from = range
                .filter(|&i| x[i] > used)
                .max_by(|&i, &j| grad[i].partial_cmp(&grad[j]).unwrap_or(std::cmp::Ordering::Equal));
            if let (Some(from), Some(to)) = (from, to) {
                let gap = grad[from] - grad[to];
                if pick.map_or(true, |(g, _, _)| gap > g) {
                    pick = Some((gap, from, to));
                }
            }
        }
        let Some((gap, from, to)) = pick else {
            converged = true;
            break;
        };
        if gap <= tol || from == to {
            converged = true;
            break;
        }
        let room = x[from];
        let base = x.clone();
        let mut phi = |t: T| {
            let mut trial = base.clone();
            trial[from] = base[from] - t;
            trial[to] = base[to] + t;
            if trial[from] < T::zero() {
                trial[from] = T::zero();
            }
            counted.eval(&trial)
        };
        let (t, ft) = golden_section(&mut phi, room, tol * scale);
        if ft < fx - tol * tol * (T::one() + fx.abs()) && t > T::zero() {
            x[from] = (x[from] - t).max(T::zero());
            x[to] += t;
            fx = ft;
        } else {
            converged = true;
            break;
        }
    }
    let x = project_feasible(&x, blocks)?;
    let value = counted.eval(&x);
    Ok(LocalResult {
        x,
        value,
        evals: counted.evals,
        converged,
    })
}

fn run_local<T: Scalar>(
    objective: &dyn Fn(&[T]) -> T,
    x0: &[T],
    blocks: &Blocks<T>,
    config: &OptimizerConfig,
) -> Result<LocalResult<T>> {
    match config.local_method {
        LocalMethod::NelderMead => local_minimize(objective, x0, blocks, config),
        LocalMethod::PairwiseShift => pairwise_shift(objective, x0, blocks, config),
        LocalMethod::Hybrid => {
            let first = local_minimize(objective, x0, blocks, config)?;
            let second = pairwise_shift(objective, &first.x, blocks, config)?;
            let evals = first.evals + second.evals;
            let best = if second.value <= first.value { second } else { first };
            Ok(LocalResult { evals, ..best })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopRecord {
    pub hop: usize,
    pub candidate: f64,
    pub accepted: bool,
    pub best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinHopResult<T> {
    pub x: Vec<T>,
    pub value: T,
    pub trace: Vec<HopRecord>,
    pub evals: usize,
    /// Whether the local search that produced `x` stopped on its own
    /// tolerance rather than the evaluation cap.
    pub local_converged: bool,
}

/// Basin hopping: uniform perturbation of width `hop_step`, projection, local
/// search, Metropolis acceptance at `temperature`. Returns the best point seen.
pub fn basin_hop<T: Scalar>(
    objective: &dyn Fn(&[T]) -> T,
    x0: &[T],
    blocks: &Blocks<T>,
    config: &OptimizerConfig,
) -> Result<BasinHopResult<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let first = run_local(objective, x0, blocks, config)?;
    let mut evals = first.evals;
    let mut local_converged = first.converged;
    let (mut current, mut current_f) = (first.x.clone(), first.value);
    let (mut best, mut best_f) = (first.x, first.value);
    let mut trace = Vec::with_capacity(config.hop_count);
    let step = config.hop_step;

    for hop in 0..config.hop_count {
        if config.target.is_some_and(|t| best_f.as_f64() <= t) {
            break;
        }
        let kicked: Vec<T> = current
            .iter()
            .map(|&v| v + T::lit(rng.gen_range(-step..=step)))
            .collect();
        let start = project_feasible(&kicked, blocks)?;
        let local = run_local(objective, &start, blocks, config)?;
        evals += local.evals;
        let delta = (local.value - current_f).as_f64();
        let accepted = delta < 0.0 || rng.gen::<f64>() < (-delta / config.temperature).exp();
        if local.value < best_f {
            best_f = local.value;
            best = local.x.clone();
            local_converged = local.converged;
        }
        if accepted {
            current = local.x;
            current_f = local.value;
        }
        trace.push(HopRecord {
            hop,
            candidate: local.value.as_f64(),
            accepted,
            best: best_f.as_f64(),
        });
    }
    Ok(BasinHopResult {
        x: best,
        value: best_f,
        trace,
        evals,
        local_converged,
    })
}
