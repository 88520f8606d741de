//! Deep energy method: the discretized energy loss, its gradient with
//! respect to nodal values, and the training loop.
//!
//! Networks are evaluated at the mesh nodes only. Field values and
//! gradients at quadrature points come from the element shape functions,
//! and the loss gradient flows back through the transpose of that
//! interpolation before entering the network's reverse pass.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use crate::dirichlet::{compose_admissible, fit_particular, penalty_loss};
use crate::material::MaterialError;
use crate::mesh::{GAMMA_T, GAMMA_U};
use crate::nn::{Adam, MlpParams};
use crate::problem::{
    gradient_at, post_fields, DemProblem, InputMap, Networks, SolveError, SolveResult, SolverKind, StopReason,
};

/// Energy loss split into its terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    /// `int Psi dOmega`
    pub internal: f64,
    /// `int t.u dGamma`
    pub traction_work: f64,
    /// `int f.u dOmega`
    pub body_work: f64,
    pub penalty: f64,
}

/// Per-problem data that does not change during training: load and
/// Dirichlet samples at the quadrature points of each table.
pub struct LossContext<'a> {
    problem: &'a DemProblem,
    components: usize,
    body: Vec<f64>,
    traction: Vec<f64>,
    /// `(beta, prescribed values at the Gamma_u points)`
    penalty: Option<(f64, Vec<f64>)>,
}

impl<'a> LossContext<'a> {
    pub fn new(problem: &'a DemProblem) -> Result<Self, SolveError> {
        problem.validate()?;
        let components = problem.components();
        let body = match &problem.body_force {
            Some(v) => v.sample(problem.tables.domain.points())?,
            None => Vec::new(),
        };
        let traction = match (&problem.traction, problem.tables.boundary(GAMMA_T)) {
            (Some(v), Some(t)) => v.sample(t.points())?,
            _ => Vec::new(),
        };
        let penalty = match (&problem.dirichlet, problem.tables.boundary(GAMMA_U)) {
            (Some(d), Some(t)) if d.enforcement.uses_penalty() => Some((d.beta, d.value.sample(t.points())?)),
            _ => None,
        };
        Ok(Self {
            problem,
            components,
            body,
            traction,
            penalty,
        })
    }

    /// Loss terms and the gradient with respect to the nodal values
    /// (`nodes x components`).
    pub fn loss(&self, nodal: &[f64]) -> Result<(LossBreakdown, Vec<f64>), SolveError> {
        let c = self.components;
        let p = self.problem;
        let expected = p.mesh.node_count() * c;
        if nodal.len() != expected {
            return Err(SolveError::InvalidProblem(format!(
                "expected {expected} nodal values, got {}",
                nodal.len()
            )));
        }
        let dim = p.dim();
        let mut out = LossBreakdown::default();

        let domain = &p.tables.domain;
        let f = domain.interpolate(nodal, c);
        let mut dvalues = vec![0.0; f.values.len()];
        let mut dgrads = vec![0.0; f.grads.len()];
        for q in 0..domain.len() {
            let w = domain.weight(q);
            let h = gradient_at(&f.grads, q, c, dim);
            let u = &f.values[q * c..(q + 1) * c];
            let d = p.material.density(dim, u, &h).map_err(|e| match e {
                MaterialError::InvertedElement(det) => SolveError::InvertedElement {
                    element: domain.element(q),
                    det,
                },
                other => other.into(),
            })?;
            out.internal += w * d.psi;
            for i in 0..c {
                let k = q * c + i;
                dvalues[k] = w * d.d_value[i];
                if !self.body.is_empty() {
                    out.body_work += w * self.body[k] * u[i];
                    dvalues[k] -= w * self.body[k];
                }
                for a in 0..dim {
                    dgrads[k * dim + a] = w * d.d_grad[i][a];
                }
            }
        }
        let mut grad = domain.scatter(&dvalues, &dgrads, c);

        if let (false, Some(table)) = (self.traction.is_empty(), p.tables.boundary(GAMMA_T)) {
            let b = table.interpolate(nodal, c);
            let mut dv = vec![0.0; b.values.len()];
            for q in 0..table.len() {
                let w = table.weight(q);
                for i in 0..c {
                    let k = q * c + i;
                    out.traction_work += w * self.traction[k] * b.values[k];
                    dv[k] = -w * self.traction[k];
                }
            }
            table.scatter_add(&dv, &[], c, &mut grad);
        }

        if let (Some((beta, ubar)), Some(table)) = (&self.penalty, p.tables.boundary(GAMMA_U)) {
            let b = table.interpolate(nodal, c);
            let (value, dv) = penalty_loss(table, &b.values, ubar, c, *beta);
            out.penalty = value;
            table.scatter_add(&dv, &[], c, &mut grad);
        }

        out.total = out.internal - out.traction_work - out.body_work + out.penalty;
        if !out.total.is_finite() {
            return Err(SolveError::NonFinite("loss"));
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(SolveError::NonFinite("loss gradient"));
        }
        Ok((out, grad))
    }
}

/// Loss and nodal gradient for one field.
pub fn dem_loss(problem: &DemProblem, nodal: &[f64]) -> Result<(f64, Vec<f64>), SolveError> {
    let (l, g) = LossContext::new(problem)?.loss(nodal)?;
    Ok((l.total, g))
}

/// True when the best loss has moved by at most `threshold * |best|` over
/// the last `window` epochs while those epochs scatter by more than that
/// amount (standard deviation): converged, then fluctuating.
pub fn early_stop_check(history: &[f64], window: usize, threshold: f64) -> bool {
    if window < 2 || history.len() <= window {
        return false;
    }
    let (before, recent) = history.split_at(history.len() - window);
    let best_before = before.iter().copied().fold(f64::INFINITY, f64::min);
    let best_recent = recent.iter().copied().fold(f64::INFINITY, f64::min);
    let best = best_before.min(best_recent);
    let tol = threshold * best.abs();
    let stalled = best_before - best_recent <= tol;
    let mean = recent.iter().sum::<f64>() / window as f64;
    let var = recent.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / window as f64;
    stalled && var.sqrt() > tol
}

/// Progress report passed to [`TrainControl::progress`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub epoch: usize,
    pub loss: f64,
}

/// Hooks into a training run.
#[derive(Default)]
pub struct TrainControl<'a> {
    /// Checked before every epoch.
    pub abort: Option<&'a AtomicBool>,
    /// Called every `progress_every` epochs and for the last one, each
    /// epoch at most once.
    pub progress: Option<&'a (dyn Fn(Progress) + Sync)>,
    pub progress_every: usize,
    /// Start from these parameters instead of fitting and initializing.
    pub initial: Option<Networks>,
}

/// Fits the particular network, then minimizes the energy loss over the
/// free network with Adam. Returns the field with the lowest recorded loss.
pub fn train(problem: &DemProblem, control: &TrainControl) -> Result<SolveResult, SolveError> {
    let start = Instant::now();
    let ctx = LossContext::new(problem)?;
    let c = problem.components();
    let dim = problem.dim();
    let map = InputMap::from_mesh(&problem.mesh);
    let inputs = map.apply(&problem.mesh.nodes);
    let n = problem.mesh.node_count();

    let distance = match &problem.dirichlet {
        Some(d) => d.distance_field(&problem.mesh.nodes)?,
        None => vec![1.0; n],
    };

    let mut particular_mse = None;
    let particular: Option<MlpParams> = match (&control.initial, &problem.dirichlet) {
        (Some(init), _) => init.particular.clone(),
        (None, Some(d)) if d.enforcement.uses_particular() => {
            let nodes = problem.mesh.group_nodes(GAMMA_U);
            let points: Vec<_> = nodes.iter().map(|&i| problem.mesh.nodes[i]).collect();
            let targets = d.value.sample(&points)?;
            let fit = fit_particular(
                &map.apply(&points),
                &targets,
                &problem.network.mlp(dim, c, 0),
                problem.training.particular_steps,
                problem.training.lr,
            )?;
            particular_mse = Some(fit.mse);
            Some(fit.params)
        }
        _ => None,
    };
    let base = match &particular {
        Some(p) => {
            if p.input_dim() != dim || p.output_dim() != c {
                return Err(SolveError::InvalidProblem("loaded particular network has the wrong shape".into()));
            }
            p.forward(&inputs)?
        }
        None => vec![0.0; n * c],
    };

    let mut free = match &control.initial {
        Some(init) => init.free.clone(),
        None => MlpParams::init(&problem.network.mlp(dim, c, 1))?,
    };
    if free.input_dim() != dim || free.output_dim() != c {
        return Err(SolveError::InvalidProblem("loaded free network has the wrong shape".into()));
    }
    let mut opt = Adam::new(free.len(), problem.training.lr);
    let every = control.progress_every.max(1);

    let mut history = Vec::with_capacity(problem.training.max_epochs);
    let mut best: Option<(f64, MlpParams, Vec<f64>)> = None;
    let mut stop_reason = StopReason::MaxEpochs;
    for epoch in 0..problem.training.max_epochs {
        if control.abort.is_some_and(|a| a.load(Ordering::Relaxed)) {
            stop_reason = StopReason::UserAbort;
            break;
        }
        let g = free.forward(&inputs)?;
        let u = compose_admissible(&base, &g, &distance, c);
        let (loss, du) = ctx.loss(&u)?;
        history.push(loss.total);
        if best.as_ref().is_none_or(|b| loss.total < b.0) {
            best = Some((loss.total, free.clone(), u));
        }
        if let Some(report) = control.progress {
            if epoch % every == 0 {
                report(Progress { epoch, loss: loss.total });
            }
        }
        if let Some(es) = &problem.training.early_stop {
            if early_stop_check(&history, es.window, es.threshold) {
                stop_reason = StopReason::EarlyStop;
                break;
            }
        }
        let ct: Vec<f64> = du.iter().enumerate().map(|(k, v)| v * distance[k / c]).collect();
        let grads = free.vjp(&inputs, &ct)?;
        opt.step(free.values_mut(), &grads)?;
    }
    if let (Some(report), Some(&last)) = (control.progress, history.last()) {
        let epoch = history.len() - 1;
        if epoch % every != 0 {
            report(Progress { epoch, loss: last });
        }
    }

    let (final_loss, free, solution) = match best {
        Some(b) => b,
        None => {
            let g = free.forward(&inputs)?;
            let u = compose_admissible(&base, &g, &distance, c);
            let (loss, _) = ctx.loss(&u)?;
            (loss.total, free, u)
        }
    };
    let fields = post_fields(&problem.material, &problem.tables.domain, &solution, c)?;
    Ok(SolveResult {
        solver: SolverKind::Dem,
        components: c,
        solution,
        history,
        stop_reason,
        fields,
        wall_time: start.elapsed(),
        final_loss,
        normalization: Some(map),
        networks: Some(Networks { particular, free }),
        particular_mse,
    })
}
