//! Box-bounded Levenberg-Marquardt for least squares and Poisson likelihood.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("{points} data points cannot constrain {params} parameters")]
    InsufficientData { points: usize, params: usize },
    #[error("invalid fit problem: {0}")]
    InvalidProblem(String),
    #[error("objective is not finite at the starting point")]
    NonFiniteObjective,
    #[error("parameter `{parameter}` has no influence on the model (singular curvature); it is not identifiable from these data")]
    SingularCurvature { parameter: String },
    #[error("saturation fit needs >= 4 points spanning a factor 3 in fluence, got {points} points spanning {span:.3}")]
    InsufficientSpan { points: usize, span: f64 },
    #[error("fluence at point {index} is negative")]
    NegativeFluence { index: usize },
    #[error("sigma at point {index} must be finite and > 0")]
    InvalidSigma { index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `sum w (y - f)^2`
    #[default]
    LeastSquares,
    /// Poisson deviance `2 sum [f - y + y ln(y / f)]`
    PoissonMle,
}

/// A parameterized model family `f(x; p)`.
pub trait Model: Sync {
    fn n_params(&self) -> usize;

    fn eval(&self, x: f64, p: &[f64]) -> f64;

    /// Writes `df/dp` into `grad` and returns true, or returns false to
    /// request central differences.
    fn gradient(&self, _x: f64, _p: &[f64], _grad: &mut [f64]) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn bounded(name: impl Into<String>, value: f64, lower: f64, upper: f64) -> Self {
        Self {
            name: name.into(),
            value,
            lower,
            upper,
        }
    }

    pub fn non_negative(name: impl Into<String>, value: f64) -> Self {
        Self::bounded(name, value, 0.0, f64::INFINITY)
    }
}

#[derive(Debug, Clone)]
pub struct FitProblem<'a, M: Model> {
    pub model: &'a M,
    pub params: Vec<Parameter>,
    pub x: &'a [f64],
    pub y: &'a [f64],
    /// Least-squares weights `1 / sigma^2`; unit weights when `None`.
    /// Ignored by the Poisson objective.
    pub weights: Option<&'a [f64]>,
    pub objective: Objective,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub relative_objective_tol: f64,
    pub gradient_tol: f64,
    pub initial_lambda: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            relative_objective_tol: 1e-10,
            gradient_tol: 1e-8,
            initial_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ObjectiveChange,
    Gradient,
    /// No damped step reduces the objective any further.
    Stalled,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// False when the curvature condition number exceeds 1e10.
    pub covariance_reliable: bool,
    pub condition_number: f64,
    pub at_bound: Vec<bool>,
    pub objective: f64,
    pub objective_kind: Objective,
    /// Objective per degree of freedom.
    pub reduced_statistic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.params[i])
    }
}

const CONDITION_LIMIT: f64 = 1e10;
const LAMBDA_MAX: f64 = 1e16;
const POLISH_STEPS: usize = 20;

struct Engine<'p, 'a, M: Model> {
    problem: &'p FitProblem<'a, M>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl<M: Model> Engine<'_, '_, M> {
    fn weight(&self, i: usize) -> f64 {
        self.problem.weights.map_or(1.0, |w| w[i])
    }

    fn objective(&self, p: &[f64]) -> f64 {
        let pr = self.problem;
        let mut total = 0.0;
        for (i, (&x, &y)) in pr.x.iter().zip(pr.y).enumerate() {
            let f = pr.model.eval(x, p);
            total += match pr.objective {
                Objective::LeastSquares => self.weight(i) * (y - f) * (y - f),
                Objective::PoissonMle => poisson_term(y, f),
            };
        }
        match pr.objective {
            Objective::LeastSquares => total,
            Objective::PoissonMle => 2.0 * total,
        }
    }

    fn model_gradient(&self, x: f64, p: &[f64], grad: &mut [f64], scratch: &mut [f64]) {
        if self.problem.model.gradient(x, p, grad) {
            return;
        }
        scratch.copy_from_slice(p);
        for j in 0..p.len() {
            let h = f64::EPSILON.sqrt() * p[j].abs().max(1e-8);
            scratch[j] = p[j] + h;
            let up = self.problem.model.eval(x, scratch);
            scratch[j] = p[j] - h;
            let down = self.problem.model.eval(x, scratch);
            scratch[j] = p[j];
            grad[j] = (up - down) / (2.0 * h);
        }
    }

    /// Half the objective gradient and the Gauss-Newton (Fisher) curvature.
    fn linearize(&self, p: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = p.len();
        let pr = self.problem;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        let mut d = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        for (i, (&x, &y)) in pr.x.iter().zip(pr.y).enumerate() {
            let f = pr.model.eval(x, p);
            self.model_gradient(x, p, &mut d, &mut scratch);
            let (resid_w, curv_w) = match pr.objective {
                Objective::LeastSquares => {
                    let w = self.weight(i);
                    (w * (f - y), w)
                }
                Objective::PoissonMle => {
                    if f > 0.0 {
                        (1.0 - y / f, 1.0 / f)
                    } else {
                        (0.0, 0.0)
                    }
                }
            };
            for a in 0..n {
                g[a] += resid_w * d[a];
                let wa = curv_w * d[a];
                for b in 0..=a {
                    h[(a, b)] += wa * d[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                h[(b, a)] = h[(a, b)];
            }
        }
        (g, h)
    }

    fn project(&self, p: &mut [f64]) {
        for (j, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }

    /// Indices free to move: not pinned at a bound by an outward gradient.
    fn free_set(&self, p: &[f64], g: &DVector<f64>) -> Vec<usize> {
        (0..p.len())
            .filter(|&j| {
                let pinned_low = p[j] <= self.lower[j] && g[j] > 0.0;
                let pinned_high = p[j] >= self.upper[j] && g[j] < 0.0;
                !(pinned_low || pinned_high)
            })
            .collect()
    }

    /// Damped step over the free set, `None` if the system is not positive definite.
    fn step(&self, g: &DVector<f64>, h: &DMatrix<f64>, free: &[usize], lambda: f64) -> Option<DVector<f64>> {
        let k = free.len();
        let mut a = DMatrix::zeros(k, k);
        let mut rhs = DVector::zeros(k);
        for (r, &i) in free.iter().enumerate() {
            rhs[r] = -g[i];
            for (c, &j) in free.iter().enumerate() {
                a[(r, c)] = h[(i, j)];
            }
            a[(r, r)] += lambda * h[(i, i)];
        }
        let chol = a.cholesky()?;
        let sol = chol.solve(&rhs);
        sol.iter().all(|v| v.is_finite()).then_some(sol)
    }

    fn trial(&self, p: &[f64], free: &[usize], delta: &DVector<f64>) -> Vec<f64> {
        let mut next = p.to_vec();
        for (r, &j) in free.iter().enumerate() {
            next[j] += delta[r];
        }
        self.project(&mut next);
        next
    }
}

fn poisson_term(y: f64, f: f64) -> f64 {
    if f <= 0.0 {
        return if y > 0.0 || f < 0.0 { f64::INFINITY } else { 0.0 };
    }
    if y > 0.0 {
        f - y + y * (y / f).ln()
    } else {
        f
    }
}

fn validate<M: Model>(problem: &FitProblem<'_, M>) -> Result<(), FitError> {
    let n = problem.params.len();
    if n != problem.model.n_params() {
        return Err(FitError::InvalidProblem(format!(
            "model takes {} parameters, {} supplied",
            problem.model.n_params(),
            n
        )));
    }
    if problem.x.len() != problem.y.len() {
        return Err(FitError::InvalidProblem("x and y lengths differ".into()));
    }
    if let Some(w) = problem.weights {
        if w.len() != problem.x.len() {
            return Err(FitError::InvalidProblem("weights length differs from data".into()));
        }
        if w.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(FitError::InvalidProblem("weights must be finite and >= 0".into()));
        }
    }
    if problem.x.len() < n {
        return Err(FitError::InsufficientData {
            points: problem.x.len(),
            params: n,
        });
    }
    for p in &problem.params {
        if !(p.lower <= p.value && p.value <= p.upper) || !p.value.is_finite() {
            return Err(FitError::InvalidProblem(format!(
                "parameter `{}` = {} lies outside [{}, {}]",
                p.name, p.value, p.lower, p.upper
            )));
        }
    }
    if problem.objective == Objective::PoissonMle && problem.y.iter().any(|&v| v < 0.0) {
        return Err(FitError::InvalidProblem("Poisson objective needs counts >= 0".into()));
    }
    Ok(())
}

/// Minimizes the chosen objective over the box-bounded parameters.
///
/// Hitting the iteration cap is not an error: the best point so far is
/// returned with `converged = false`.
pub fn fit_nonlinear<M: Model>(problem: &FitProblem<'_, M>, opts: &FitOptions) -> Result<FitResult, FitError> {
    validate(problem)?;
    let engine = Engine {
        problem,
        lower: problem.params.iter().map(|p| p.lower).collect(),
        upper: problem.params.iter().map(|p| p.upper).collect(),
    };
    let names: Vec<String> = problem.params.iter().map(|p| p.name.clone()).collect();
    let mut p: Vec<f64> = problem.params.iter().map(|p| p.value).collect();
    let mut obj = engine.objective(&p);
    if !obj.is_finite() {
        return Err(FitError::NonFiniteObjective);
    }

    let mut lambda = opts.initial_lambda;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    let (mut g, mut h) = engine.linearize(&p);
    {
        let free = engine.free_set(&p, &g);
        if let Some(&j) = free.iter().find(|&&j| h[(j, j)] == 0.0) {
            return Err(FitError::SingularCurvature {
                parameter: names[j].clone(),
            });
        }
    }

    'outer: while iterations < opts.max_iterations {
        iterations += 1;
        let free = engine.free_set(&p, &g);
        if free.is_empty() {
            termination = Termination::Gradient;
            break;
        }
        let grad_scale = free
            .iter()
            .map(|&j| (g[j] * p[j].abs().max(f64::MIN_POSITIVE)).abs())
            .fold(0.0, f64::max);
        if grad_scale <= opts.gradient_tol * obj {
            termination = Termination::Gradient;
            break;
        }
        loop {
            let Some(delta) = engine.step(&g, &h, &free, lambda) else {
                lambda *= 10.0;
                if lambda > LAMBDA_MAX {
                    termination = Termination::Stalled;
                    break 'outer;
                }
                continue;
            };
            let next = engine.trial(&p, &free, &delta);
            let next_obj = engine.objective(&next);
            if next_obj.is_finite() && next_obj <= obj {
                let change = obj - next_obj;
                p = next;
                lambda = (lambda / 10.0).max(1e-12);
                let converged = change <= opts.relative_objective_tol * obj;
                obj = next_obj;
                (g, h) = engine.linearize(&p);
                if converged {
                    termination = Termination::ObjectiveChange;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                termination = Termination::Stalled;
                break 'outer;
            }
        }
    }
    let converged = termination != Termination::MaxIterations;

    if converged {
        // undamped Newton polish so that refitting from the optimum is a fixed point
        for _ in 0..POLISH_STEPS {
            let free = engine.free_set(&p, &g);
            if free.is_empty() {
                break;
            }
            let Some(delta) = engine.step(&g, &h, &free, 0.0).or_else(|| engine.step(&g, &h, &free, 1e-12)) else {
                break;
            };
            let next = engine.trial(&p, &free, &delta);
            let next_obj = engine.objective(&next);
            // at the optimum the objective is flat to rounding; only a real rise stops the polish
            if !(next_obj.is_finite() && next_obj <= obj + 64.0 * f64::EPSILON * obj.abs()) {
                break;
            }
            let moved = free
                .iter()
                .map(|&j| (next[j] - p[j]).abs() / p[j].abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            p = next;
            obj = next_obj;
            (g, h) = engine.linearize(&p);
            if moved < 1e-14 {
                break;
            }
        }
    }

    let n = p.len();
    let free = engine.free_set(&p, &g);
    let (covariance, condition_number) = covariance(&h, &free, n);
    let std_errors = (0..n).map(|j| covariance[j][j].max(0.0).sqrt()).collect();
    let at_bound = (0..n).map(|j| p[j] <= engine.lower[j] || p[j] >= engine.upper[j]).collect();
    let dof = problem.x.len().saturating_sub(free.len()).max(1);
    Ok(FitResult {
        names,
        params: p,
        std_errors,
        covariance,
        covariance_reliable: condition_number <= CONDITION_LIMIT,
        condition_number,
        at_bound,
        objective: obj,
        objective_kind: problem.objective,
        reduced_statistic: obj / dof as f64,
        iterations,
        converged,
        termination,
    })
}

/// Inverse curvature over the free parameters; pinned parameters get zero
/// rows. The condition number is taken on the unit-diagonal rescaling so it
/// does not depend on parameter units.
fn covariance(h: &DMatrix<f64>, free: &[usize], n: usize) -> (Vec<Vec<f64>>, f64) {
    let mut cov = vec![vec![0.0; n]; n];
    let k = free.len();
    if k == 0 {
        return (cov, 1.0);
    }
    let scale: Vec<f64> = free.iter().map(|&j| h[(j, j)].sqrt()).collect();
    if scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return (cov, f64::INFINITY);
    }
    let m = DMatrix::from_fn(k, k, |r, c| h[(free[r], free[c])] / (scale[r] * scale[c]));
    let svd = m.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let inv = match svd.pseudo_inverse(smax * 1e-15) {
        Ok(inv) => inv,
        Err(_) => return (cov, f64::INFINITY),
    };
    for (r, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            cov[i][j] = inv[(r, c)] / (scale[r] * scale[c]);
        }
    }
    (cov, cond)
}

/// `I(P) = A (1 - exp(-P / P_sat)) + B P`, parameters `[A, B, P_sat]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SaturationModel;

impl Model for SaturationModel {
    fn n_params(&self) -> usize {
        3
    }

    fn eval(&self, x: f64, p: &[f64]) -> f64 {
        p[0] * -(-x / p[2]).exp_m1() + p[1] * x
    }

    fn gradient(&self, x: f64, p: &[f64], grad: &mut [f64]) -> bool {
        let e = (-x / p[2]).exp();
        grad[0] = -(-x / p[2]).exp_m1();
        grad[1] = x;
        grad[2] = -p[0] * e * (x / p[2]) / p[2];
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationPoint {
    /// Energy per area per pulse, uJ/cm^2.
    pub fluence: f64,
    /// Detected counts per second.
    pub intensity: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationFit {
    pub a: f64,
    pub b: f64,
    pub p_sat: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub p_sat_sigma: f64,
    /// Ordered `[A, B, P_sat]`.
    pub covariance: Vec<Vec<f64>>,
    pub chi_square: f64,
    pub reduced_chi_square: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl SaturationFit {
    pub fn intensity_at(&self, fluence: f64) -> f64 {
        SaturationModel.eval(fluence, &[self.a, self.b, self.p_sat])
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Weighted least-squares fit of the saturation curve.
pub fn fit_saturation(points: &[SaturationPoint]) -> Result<SaturationFit, FitError> {
    for (index, pt) in points.iter().enumerate() {
        if pt.fluence < 0.0 || !pt.fluence.is_finite() {
            return Err(FitError::NegativeFluence { index });
        }
        if !(pt.sigma > 0.0 && pt.sigma.is_finite()) {
            return Err(FitError::InvalidSigma { index });
        }
    }
    let mut sorted: Vec<SaturationPoint> = points.to_vec();
    sorted.sort_by(|a, b| a.fluence.total_cmp(&b.fluence));
    let min_pos = sorted.iter().map(|p| p.fluence).find(|&f| f > 0.0);
    let max_f = sorted.last().map_or(0.0, |p| p.fluence);
    let span = min_pos.map_or(0.0, |m| max_f / m);
    if sorted.len() < 4 || span < 3.0 {
        return Err(FitError::InsufficientSpan {
            points: sorted.len(),
            span,
        });
    }

    let x: Vec<f64> = sorted.iter().map(|p| p.fluence).collect();
    let y: Vec<f64> = sorted.iter().map(|p| p.intensity).collect();
    let w: Vec<f64> = sorted.iter().map(|p| 1.0 / (p.sigma * p.sigma)).collect();
    let a0 = y.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let p0 = median(&x);
    let n = x.len();
    let b0 = if x[n - 1] > x[n - 2] {
        ((y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2])).max(0.0)
    } else {
        0.0
    };
    let psat_floor = min_pos.unwrap_or(1.0) * 1e-3;
    let problem = FitProblem {
        model: &SaturationModel,
        params: vec![
            Parameter::non_negative("A", a0),
            Parameter::non_negative("B", b0),
            Parameter::bounded("P_sat", p0.max(psat_floor), psat_floor, f64::INFINITY),
        ],
        x: &x,
        y: &y,
        weights: Some(&w),
        objective: Objective::LeastSquares,
    };
    let r = fit_nonlinear(&problem, &FitOptions::default())?;
    Ok(SaturationFit {
        a: r.params[0],
        b: r.params[1],
        p_sat: r.params[2],
        a_sigma: r.std_errors[0],
        b_sigma: r.std_errors[1],
        p_sat_sigma: r.std_errors[2],
        covariance: r.covariance,
        chi_square: r.objective,
        reduced_chi_square: r.reduced_statistic,
        converged: r.converged,
        iterations: r.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Line;
    impl Model for Line {
        fn n_params(&self) -> usize {
            1
        }
        fn eval(&self, x: f64, p: &[f64]) -> f64 {
            p[0] * x
        }
    }

    struct Degenerate;
    impl Model for Degenerate {
        fn n_params(&self) -> usize {
            2
        }
        fn eval(&self, x: f64, p: &[f64]) -> f64 {
            p[0] * x
        }
    }

    fn ls<'a, M: Model>(model: &'a M, params: Vec<Parameter>, x: &'a [f64], y: &'a [f64]) -> FitProblem<'a, M> {
        FitProblem {
            model,
            params,
            x,
            y,
            weights: None,
            objective: Objective::LeastSquares,
        }
    }

    #[test]
    fn linear_exact_data() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = x.map(|v| 2.5 * v);
        let r = fit_nonlinear(&ls(&Line, vec![Parameter::new("a", 1.0)], &x, &y), &FitOptions::default()).unwrap();
        assert!((r.params[0] - 2.5).abs() <= 4.0 * f64::EPSILON * 2.5);
        assert!(r.converged);
    }

    #[test]
    fn lower_bound_is_respected() {
        let x = [1.0, 2.0, 3.0];
        let y = [-1.0, -2.0, -3.0];
        let r = fit_nonlinear(
            &ls(&Line, vec![Parameter::non_negative("a", 1.0)], &x, &y),
            &FitOptions::default(),
        )
        .unwrap();
        assert_eq!(r.params[0], 0.0);
        assert!(r.at_bound[0]);
    }

    #[test]
    fn unused_parameter_is_singular() {
        let x = [1.0, 2.0, 3.0];
        let y = [1.0, 2.0, 3.0];
        let err = fit_nonlinear(
            &ls(&Degenerate, vec![Parameter::new("a", 1.0), Parameter::new("b", 1.0)], &x, &y),
            &FitOptions::default(),
        )
        .unwrap_err();
        assert_eq!(err, FitError::SingularCurvature { parameter: "b".into() });
    }

    #[test]
    fn too_few_points() {
        let x = [1.0];
        let y = [1.0];
        let err = fit_nonlinear(
            &ls(&Degenerate, vec![Parameter::new("a", 1.0), Parameter::new("b", 1.0)], &x, &y),
            &FitOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, FitError::InsufficientData { points: 1, params: 2 }));
    }

    #[test]
    fn poisson_objective_on_constant() {
        struct Flat;
        impl Model for Flat {
            fn n_params(&self) -> usize {
                1
            }
            fn eval(&self, _x: f64, p: &[f64]) -> f64 {
                p[0]
            }
        }
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [3.0, 5.0, 4.0, 0.0];
        let r = fit_nonlinear(
            &FitProblem {
                model: &Flat,
                params: vec![Parameter::non_negative("c", 1.0)],
                x: &x,
                y: &y,
                weights: None,
                objective: Objective::PoissonMle,
            },
            &FitOptions::default(),
        )
        .unwrap();
        // MLE of a Poisson mean is the sample mean; Fisher variance is mean / n
        assert!((r.params[0] - 3.0).abs() < 1e-10);
        assert!((r.std_errors[0] - (3.0f64 / 4.0).sqrt()).abs() < 1e-8);
    }

    #[test]
    fn saturation_curve_at_p_sat() {
        let v = SaturationModel.eval(9.0, &[1000.0, 0.0, 9.0]);
        assert!((v - 1000.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-9);
    }

    #[test]
    fn saturation_rejects_bad_input() {
        let pt = |f: f64| SaturationPoint {
            fluence: f,
            intensity: 1.0,
            sigma: 1.0,
        };
        assert!(matches!(
            fit_saturation(&[pt(1.0), pt(2.0)]),
            Err(FitError::InsufficientSpan { points: 2, .. })
        ));
        assert!(matches!(
            fit_saturation(&[pt(1.0), pt(1.5), pt(2.0), pt(2.5)]),
            Err(FitError::InsufficientSpan { .. })
        ));
        assert!(matches!(
            fit_saturation(&[pt(1.0), pt(-2.0), pt(4.0), pt(8.0)]),
            Err(FitError::NegativeFluence { index: 1 })
        ));
    }
}
