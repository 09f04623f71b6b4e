//! ε-insensitive support-vector regression solved by SMO on a precomputed
//! kernel matrix.
//!
//! The dual has `2l` variables `α = [α⁺; α⁻]` with labels `y = [+1; -1]`:
//!
//! ```text
//! min ½ αᵀQα + pᵀα   s.t.  yᵀα = 0,  0 ≤ α ≤ C
//! Q_st = y_s y_t K(s mod l, t mod l),  p = [ε - z; ε + z]
//! ```
//!
//! Working pairs are chosen as in libsvm: the maximal violator first, then
//! the partner giving the largest second-order decrease of the objective.

use serde::Serialize;

use super::{PredictError, Result};

const TAU: f64 = 1e-12;
/// Relative distance to 0 or `C` below which a coefficient is put on the bound.
const BOUND_SNAP: f64 = 1e-12;

pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// `exp(-γ‖x - x′‖²)`.
pub fn rbf_kernel(x: &[f64], x2: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(PredictError::Shape(format!(
            "vectors of length {} and {}",
            x.len(),
            x2.len()
        )));
    }
    if gamma.is_nan() || gamma <= 0.0 {
        return Err(PredictError::Config(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    Ok((-gamma * squared_distance(x, x2)).exp())
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row-major `a.len() × b.len()` matrix of squared distances.
pub fn cross_squared_distances(a: &[&[f64]], b: &[&[f64]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(squared_distance(x, y));
        }
    }
    out
}

/// Symmetric `n × n` squared distance matrix.
pub fn squared_distances(rows: &[&[f64]]) -> Vec<f64> {
    let n = rows.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = squared_distance(rows[i], rows[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SvrParams {
    pub c: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Stopping threshold on the maximal KKT violation pair.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl SvrParams {
    pub fn new(c: f64, gamma: f64) -> Self {
        SvrParams {
            c,
            gamma,
            epsilon: DEFAULT_EPSILON,
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(PredictError::Config(format!(
                "C must be positive, got {}",
                self.c
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(PredictError::Config(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(PredictError::Config(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(PredictError::Config("tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Dual solution on a fixed kernel matrix. Keeps `α` and the gradient so a
/// later solve with a larger `C` can start from it.
#[derive(Debug, Clone)]
pub struct DualSolver<'a> {
    kernel: &'a [f64],
    l: usize,
    targets: &'a [f64],
    epsilon: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    /// `α⁺ - α⁻` per training sample.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    /// Final maximal violation `m(α) - M(α)`.
    pub gap: f64,
}

impl<'a> DualSolver<'a> {
    pub fn new(kernel: &'a [f64], targets: &'a [f64], epsilon: f64) -> Result<Self> {
        let l = targets.len();
        if kernel.len() != l * l {
            return Err(PredictError::Shape(format!(
                "kernel of {} entries for {l} samples",
                kernel.len()
            )));
        }
        if l < 2 {
            return Err(PredictError::TooFewSamples(l));
        }
        if targets.iter().chain(kernel).any(|v| !v.is_finite()) {
            return Err(PredictError::NonFinite);
        }
        let mut grad = Vec::with_capacity(2 * l);
        grad.extend(targets.iter().map(|z| epsilon - z));
        grad.extend(targets.iter().map(|z| epsilon + z));
        Ok(DualSolver {
            kernel,
            l,
            targets,
            epsilon,
            alpha: vec![0.0; 2 * l],
            grad,
            c: 0.0,
        })
    }

    fn y(&self, t: usize) -> f64 {
        if t < self.l {
            1.0
        } else {
            -1.0
        }
    }

    fn k(&self, a: usize, b: usize) -> f64 {
        self.kernel[(a % self.l) * self.l + b % self.l]
    }

    /// Solves with box `C`. `C` must not be smaller than any previous solve,
    /// so the stored `α` stays feasible.
    pub fn solve(&mut self, c: f64, tolerance: f64, max_iter: usize) -> Result<DualSolution> {
        if c < self.c {
            return Err(PredictError::Config(format!(
                "warm start needs non-decreasing C ({} after {})",
                c, self.c
            )));
        }
        self.c = c;
        let l = self.l;
        let n = 2 * l;
        let mut iter = 0;
        let gap = loop {
            // maximal violating pair (first index) and second-order partner
            let mut gmax = f64::NEG_INFINITY;
            let mut i = usize::MAX;
            for t in 0..n {
                let yt = self.y(t);
                let up = if yt > 0.0 {
                    self.alpha[t] < c
                } else {
                    self.alpha[t] > 0.0
                };
                if up && -yt * self.grad[t] >= gmax {
                    gmax = -yt * self.grad[t];
                    i = t;
                }
            }
            let mut gmax2 = f64::NEG_INFINITY;
            let mut j = usize::MAX;
            let mut best = f64::INFINITY;
            if i != usize::MAX {
                let kii = self.k(i, i);
                for t in 0..n {
                    let yt = self.y(t);
                    let low = if yt > 0.0 {
                        self.alpha[t] > 0.0
                    } else {
                        self.alpha[t] < c
                    };
                    if !low {
                        continue;
                    }
                    let ytg = yt * self.grad[t];
                    gmax2 = gmax2.max(ytg);
                    let diff = gmax + ytg;
                    if diff > 0.0 {
                        let quad = (kii + self.k(t, t) - 2.0 * self.k(i, t)).max(TAU);
                        let obj = -diff * diff / quad;
                        if obj <= best {
                            best = obj;
                            j = t;
                        }
                    }
                }
            }
            let gap = gmax + gmax2;
            if i == usize::MAX || j == usize::MAX || gap < tolerance {
                break gap.max(0.0);
            }
            if iter >= max_iter {
                return Err(PredictError::NotConverged { iterations: iter });
            }
            iter += 1;
            self.update_pair(i, j, c);
        };
        let (coef, bias) = self.coefficients();
        Ok(DualSolution {
            coef,
            bias,
            iterations: iter,
            gap,
        })
    }

    fn update_pair(&mut self, i: usize, j: usize, c: f64) {
        let (yi, yj) = (self.y(i), self.y(j));
        let (kii, kjj, kij) = (self.k(i, i), self.k(j, j), self.k(i, j));
        let q_ij = yi * yj * kij;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if yi != yj {
            let quad = (kii + kjj + 2.0 * q_ij).max(TAU);
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (kii + kjj - 2.0 * q_ij).max(TAU);
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        // clipping arithmetic can leave rounding residue next to a bound
        let snap = |a: f64| {
            if a <= BOUND_SNAP * c {
                0.0
            } else if a >= c - BOUND_SNAP * c {
                c
            } else {
                a
            }
        };
        let (ai, aj) = (snap(ai), snap(aj));
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (yi * (ai - old_i), yj * (aj - old_j));
        let l = self.l;
        let (ri, rj) = ((i % l) * l, (j % l) * l);
        for t in 0..l {
            let u = di * self.kernel[ri + t] + dj * self.kernel[rj + t];
            self.grad[t] += u;
            self.grad[t + l] -= u;
        }
    }

    fn coefficients(&self) -> (Vec<f64>, f64) {
        let (l, c) = (self.l, self.c);
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut free_sum, mut n_free) = (0.0, 0usize);
        for t in 0..2 * l {
            let y = self.y(t);
            let yg = y * self.grad[t];
            if self.alpha[t] >= c {
                if y < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.alpha[t] <= 0.0 {
                if y > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                n_free += 1;
                free_sum += yg;
            }
        }
        let rho = if n_free > 0 {
            free_sum / n_free as f64
        } else {
            (ub + lb) / 2.0
        };
        let coef = (0..l).map(|t| self.alpha[t] - self.alpha[t + l]).collect();
        (coef, -rho)
    }

    /// Maximal KKT violation recomputed from scratch for coefficients `β`
    /// (`α⁺ = max(β, 0)`, `α⁻ = max(-β, 0)`), independent of solver state.
    pub fn kkt_gap(kernel: &[f64], targets: &[f64], coef: &[f64], c: f64, epsilon: f64) -> f64 {
        let l = targets.len();
        let (mut m_up, mut m_low) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for s in 0..l {
            let kb: f64 = (0..l).map(|t| kernel[s * l + t] * coef[t]).sum();
            let (ap, am) = (coef[s].max(0.0), (-coef[s]).max(0.0));
            // gradients of the α⁺ and α⁻ coordinates
            let gp = kb + epsilon - targets[s];
            let gm = -kb + epsilon + targets[s];
            // -y·G over the up set, y·G over the low set
            if ap < c {
                m_up = m_up.max(-gp);
            }
            if ap > 0.0 {
                m_low = m_low.max(gp);
            }
            if am > 0.0 {
                m_up = m_up.max(gm);
            }
            if am < c {
                m_low = m_low.max(-gm);
            }
        }
        (m_up + m_low).max(0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn targets(&self) -> &[f64] {
        self.targets
    }
}

/// Fitted regressor: support vectors with non-zero coefficients only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SvrModel {
    pub support_vectors: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub bias: f64,
    pub params: SvrParams,
    pub iterations: usize,
    pub gap: f64,
}

impl SvrModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coef)
            .map(|(sv, b)| b * (-self.params.gamma * squared_distance(sv, x)).exp())
            .sum::<f64>()
            + self.bias
    }
}

pub fn svr_fit(features: &[Vec<f64>], targets: &[f64], params: SvrParams) -> Result<SvrModel> {
    params.validate()?;
    if features.len() != targets.len() {
        return Err(PredictError::Shape(format!(
            "{} feature rows for {} targets",
            features.len(),
            targets.len()
        )));
    }
    let dim = features.first().map_or(0, Vec::len);
    if features.iter().any(|f| f.len() != dim) {
        return Err(PredictError::Shape("feature rows differ in length".into()));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(PredictError::NonFinite);
    }
    let rows: Vec<&[f64]> = features.iter().map(Vec::as_slice).collect();
    let kernel: Vec<f64> = squared_distances(&rows)
        .into_iter()
        .map(|d| (-params.gamma * d).exp())
        .collect();
    let mut solver = DualSolver::new(&kernel, targets, params.epsilon)?;
    let sol = solver.solve(params.c, params.tolerance, params.max_iter)?;
    let (support_vectors, coef) = features
        .iter()
        .zip(&sol.coef)
        .filter(|(_, &b)| b != 0.0)
        .map(|(f, &b)| (f.clone(), b))
        .unzip();
    Ok(SvrModel {
        support_vectors,
        coef,
        bias: sol.bias,
        params,
        iterations: sol.iterations,
        gap: sol.gap,
    })
}
