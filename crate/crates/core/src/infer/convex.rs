use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem as Lp, SolveOutcome};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Residual, WeightedAdjacency};
use crate::error::{Error, Result};
use crate::generate::TrajectorySystem;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvexMethod {
    /// Exact simplex solve of the relaxation with the hard constraint
    /// `Ã1 = d`.
    #[default]
    Lp,
    /// Projected gradient on the Huber-smoothed residual with a quadratic
    /// degree penalty.
    Gradient,
}

impl std::str::FromStr for ConvexMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lp" => Ok(ConvexMethod::Lp),
            "gradient" => Ok(ConvexMethod::Gradient),
            _ => Err(Error::Config(format!("unknown convex method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    #[serde(default)]
    pub method: ConvexMethod,
    /// The remaining fields only affect the gradient method.
    pub max_iters: usize,
    /// Initial step size; adapted as steps are accepted or rejected.
    pub learning_rate: f64,
    /// Weight λ of `‖Ã1 − d‖²`.
    pub degree_penalty: f64,
    /// Huber smoothing width δ.
    pub huber_delta: f64,
    /// Stop once an accepted step changes the objective by less than this
    /// fraction.
    pub tolerance: f64,
    /// Seeds the jitter of the starting point.
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: ConvexMethod::Lp,
            max_iters: 5000,
            learning_rate: 0.05,
            degree_penalty: 10.0,
            huber_delta: 1e-3,
            tolerance: 1e-10,
            seed: 0,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.huber_delta, self.tolerance];
        if self.max_iters == 0 || positive.iter().any(|x| !(*x > 0.0)) || !(self.degree_penalty >= 0.0) {
            return Err(Error::Config("solver options must be positive".into()));
        }
        Ok(())
    }
}

/// One line of solver telemetry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub iter: usize,
    /// Smoothed objective of the current iterate.
    pub objective: f64,
    /// `‖Ã1 − d‖₂` of the current iterate.
    pub degree_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSolution {
    pub weights: WeightedAdjacency,
    /// Smoothed objective at the returned iterate.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub telemetry: Vec<SolveRecord>,
}

impl ConvexSolution {
    /// Telemetry as JSON lines.
    pub fn telemetry_jsonl(&self) -> String {
        self.telemetry
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

fn huber(x: f64, delta: f64) -> f64 {
    if x.abs() <= delta {
        x * x / (2.0 * delta)
    } else {
        x.abs() - delta / 2.0
    }
}

struct Problem<'a> {
    res: &'a Residual,
    lambda: f64,
    delta: f64,
}

struct Evaluation {
    objective: f64,
    violation: f64,
    grad: Vec<f64>,
}

impl Problem<'_> {
    fn dense(&self, x: &[f64]) -> Array2<f64> {
        let n = self.res.n;
        let mut a = Array2::zeros((n, n));
        let mut idx = 0;
        for i in 0..n {
            for j in i + 1..n {
                a[[i, j]] = x[idx];
                a[[j, i]] = x[idx];
                idx += 1;
            }
        }
        a
    }

    fn objective(&self, x: &[f64]) -> (f64, f64, Array2<f64>, Vec<f64>) {
        let a = self.dense(x);
        let resid = self.res.matrix(&a);
        let fit: f64 = resid.iter().map(|&r| huber(r, self.delta)).sum();
        let excess: Vec<f64> = a
            .rows()
            .into_iter()
            .zip(&self.res.degrees)
            .map(|(row, d)| row.sum() - d)
            .collect();
        let sq: f64 = excess.iter().map(|e| e * e).sum();
        (fit + self.lambda * sq, sq.sqrt(), resid, excess)
    }

    fn evaluate(&self, x: &[f64]) -> Evaluation {
        let n = self.res.n;
        let (objective, violation, resid, excess) = self.objective(x);
        let g = resid.mapv(|r| (r / self.delta).clamp(-1.0, 1.0));
        // ∂/∂A_ij as if the entries were independent: (1−α) (Uᵀ G)_ij s_j.
        let p = self.res.u.t().dot(&g);
        let c = 1.0 - self.res.alpha;
        let s = &self.res.scale;
        let mut grad = Vec::with_capacity(x.len());
        for i in 0..n {
            for j in i + 1..n {
                let fit = c * (p[[i, j]] * s[j] + p[[j, i]] * s[i]);
                grad.push(fit + 2.0 * self.lambda * (excess[i] + excess[j]));
            }
        }
        Evaluation {
            objective,
            violation,
            grad,
        }
    }
}

/// Solves the relaxation of the residual problem with `Ã ∈ [0,1]`,
/// symmetric with zero diagonal, by the method chosen in `opts`.
pub fn solve_convex(sys: &TrajectorySystem, opts: &SolveOptions) -> Result<ConvexSolution> {
    opts.validate()?;
    let res = Residual::new(sys)?;
    if res.n < 2 {
        return Err(Error::Precondition("convex solve needs at least two nodes".into()));
    }
    match opts.method {
        ConvexMethod::Lp => match solve_lp(&res) {
            Err(Error::NonFinite(msg)) => {
                log::warn!("{msg}; falling back to projected gradient");
                solve_gradient(&res, opts)
            }
            other => other,
        },
        ConvexMethod::Gradient => solve_gradient(&res, opts),
    }
}

/// `min Σ |X_rj|` subject to `0 ≤ Ã ≤ 1` and `Ã1 = d`, as a linear program:
/// each residual entry is split as `X_rj = p_rj − q_rj` with `p, q ≥ 0`.
fn solve_lp(res: &Residual) -> Result<ConvexSolution> {
    let n = res.n;
    let c = 1.0 - res.alpha;
    let mut lp = Lp::new(OptimizationDirection::Minimize);
    let mut var = vec![vec![None; n]; n];
    let mut upper_vars = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let v = lp.add_var(0.0, (0.0, 1.0));
            var[i][j] = Some(v);
            var[j][i] = Some(v);
            upper_vars.push(v);
        }
    }
    let entry = |i: usize, j: usize| var[i][j].expect("off-diagonal variable");
    for i in 0..n {
        let row: LinearExpr = (0..n).filter(|&j| j != i).map(|j| (entry(i, j), 1.0)).collect();
        lp.add_constraint(row, ComparisonOp::Eq, res.degrees[i]);
    }
    for r in 0..res.u.nrows() {
        for j in 0..n {
            let s = res.scale[j];
            let pos = lp.add_var(1.0, (0.0, f64::INFINITY));
            let neg = lp.add_var(1.0, (0.0, f64::INFINITY));
            let mut expr: LinearExpr = (0..n)
                .filter(|&i| i != j)
                .map(|i| (entry(i, j), s * c * res.u[[r, i]]))
                .collect();
            expr.add(pos, -1.0);
            expr.add(neg, 1.0);
            let constant = s * res.alpha * res.u[[r, j]] - res.v2[[r, j]];
            lp.add_constraint(expr, ComparisonOp::Eq, -constant);
        }
    }
    let solution = match lp.solve() {
        Ok(SolveOutcome::Solution(sol)) => sol,
        Ok(SolveOutcome::Interrupted(_)) => return Err(Error::Infeasible("linear program was interrupted".into())),
        Err(microlp::Error::Infeasible) => {
            return Err(Error::Infeasible("relaxation has no weights meeting the degrees".into()))
        }
        Err(e) => return Err(Error::NonFinite(format!("linear program failed: {e}"))),
    };
    let upper: Vec<f64> = upper_vars
        .iter()
        .map(|&v| solution.var_value(v).clamp(0.0, 1.0))
        .collect();
    let weights = WeightedAdjacency { n, upper };
    let objective = res.l1(&weights.dense());
    let violation = weights
        .row_sums()
        .iter()
        .zip(&res.degrees)
        .map(|(a, d)| (a - d).powi(2))
        .sum::<f64>()
        .sqrt();
    log::debug!("convex LP: objective {objective:.6e}, degree violation {violation:.3e}");
    Ok(ConvexSolution {
        weights,
        objective,
        iterations: 1,
        converged: true,
        telemetry: vec![SolveRecord {
            iter: 1,
            objective,
            degree_violation: violation,
        }],
    })
}

/// Projected gradient descent on the smoothed relaxation
/// `Σ huber(X_ij) + λ ‖Ã1 − d‖²` over `Ã ∈ [0,1]`, parameterized by its upper
/// triangle. A step that does not decrease the objective is rejected and the
/// step size halved; accepted steps grow it by 10%. The best iterate is
/// returned.
fn solve_gradient(res: &Residual, opts: &SolveOptions) -> Result<ConvexSolution> {
    let n = res.n;
    let problem = Problem {
        res,
        lambda: opts.degree_penalty,
        delta: opts.huber_delta,
    };

    // Start from the expected-degree weights d_i d_j / Σd, lightly jittered.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let total: f64 = res.degrees.iter().sum();
    let mut x = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let w = res.degrees[i] * res.degrees[j] / total + rng.random_range(-1e-3..1e-3);
            x.push(w.clamp(0.0, 1.0));
        }
    }

    let mut current = problem.evaluate(&x);
    if !current.objective.is_finite() {
        return Err(Error::NonFinite("convex objective at the starting point".into()));
    }
    let mut lr = opts.learning_rate;
    let mut telemetry = vec![SolveRecord {
        iter: 0,
        objective: current.objective,
        degree_violation: current.violation,
    }];
    let mut converged = false;
    let mut iterations = 0;
    let mut candidate = vec![0.0; x.len()];

    for iter in 1..=opts.max_iters {
        iterations = iter;
        for ((c, xi), g) in candidate.iter_mut().zip(&x).zip(&current.grad) {
            *c = (xi - lr * g).clamp(0.0, 1.0);
        }
        let trial = problem.evaluate(&candidate);
        if !trial.objective.is_finite() {
            return Err(Error::NonFinite(format!(
                "convex objective became {} at iteration {iter} (step size {lr:e})",
                trial.objective
            )));
        }
        if trial.objective <= current.objective {
            let change = (current.objective - trial.objective) / current.objective.max(f64::MIN_POSITIVE);
            std::mem::swap(&mut x, &mut candidate);
            current = trial;
            lr *= 1.1;
            telemetry.push(SolveRecord {
                iter,
                objective: current.objective,
                degree_violation: current.violation,
            });
            if change < opts.tolerance {
                converged = true;
                break;
            }
        } else {
            lr *= 0.5;
            if lr < 1e-18 {
                converged = true;
                break;
            }
        }
    }
    log::debug!(
        "convex solve: {iterations} iterations, objective {:.6e}, degree violation {:.3e}",
        current.objective,
        current.violation
    );
    Ok(ConvexSolution {
        weights: WeightedAdjacency { n, upper: x },
        objective: current.objective,
        iterations,
        converged,
        telemetry,
    })
}
