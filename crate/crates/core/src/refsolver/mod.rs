//! Reference ACOPF solutions: a local augmented-Lagrangian solver for
//! desk-scale label generation, plus validated ingestion of externally
//! produced labels.
//!
//! The solver works on the full decision vector (vm, va, pg, qg). Power-balance
//! equalities enter through multipliers and a quadratic penalty; box
//! constraints are enforced by projection; the inner minimization takes damped
//! Gauss-Newton steps with an Armijo backtracking line search. Line ratings are
//! checked a posteriori and reported, never enforced.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid_model::{AdmittanceMatrix, Network};
use crate::powerflow::{
    branch_flows, bus_injections_complex, generation_cost, residual_check, DemandVector,
    GenSetpoints, VoltageProfile,
};

/// Where a solution came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionSource {
    InternalSolver,
    Imported,
    Nn,
    Calibrated,
}

/// Feasibility summary carried with every solution.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FeasibilitySummary {
    pub mean_abs: f64,
    pub max_abs: f64,
}

/// A full ACOPF decision vector {|V|, φ, P_G, Q_G} with its objective value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpfSolution {
    pub voltage: VoltageProfile,
    pub gen: GenSetpoints,
    /// Objective in $/hr; always equals `generation_cost(gen)`.
    pub objective: f64,
    pub feasibility: FeasibilitySummary,
    pub source: SolutionSource,
}

impl OpfSolution {
    /// Assemble a solution, computing the objective and feasibility summary.
    pub fn assemble(
        net: &Network,
        ybus: &AdmittanceMatrix,
        voltage: VoltageProfile,
        gen: GenSetpoints,
        demand: &DemandVector,
        source: SolutionSource,
    ) -> Self {
        let report = residual_check(ybus, &voltage, demand, &gen);
        let objective = generation_cost(net, &gen);
        OpfSolution {
            voltage,
            gen,
            objective,
            feasibility: FeasibilitySummary {
                mean_abs: report.mean_abs,
                max_abs: report.max_abs,
            },
            source,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Mean power-balance residual at which a point counts as feasible.
    pub feas_tol: f64,
    /// Stationarity threshold on the scaled projected gradient.
    pub opt_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub penalty_init: f64,
    pub penalty_growth: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            feas_tol: 1e-6,
            opt_tol: 1e-3,
            max_outer: 40,
            max_inner: 80,
            penalty_init: 1e4,
            penalty_growth: 10.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("solver did not converge: residual {residual:.3e} after {outer} outer rounds")]
    NotConverged { outer: usize, residual: f64 },
}

/// Per-solve diagnostics emitted alongside labels.
#[derive(Debug, Clone, Serialize)]
pub struct SolveDiagnostics {
    pub outer_rounds: usize,
    pub inner_steps: usize,
    pub final_residual: f64,
    pub line_violations: usize,
}

struct Workspace<'a> {
    net: &'a Network,
    ybus: &'a AdmittanceMatrix,
    demand: &'a DemandVector,
    n: usize,
    ng: usize,
    gen_bus: Vec<usize>,
    lo: DVector<f64>,
    hi: DVector<f64>,
}

impl<'a> Workspace<'a> {
    // layout: x = [vm(n), va(n), pg(ng), qg(ng)]
    fn dim(&self) -> usize {
        2 * self.n + 2 * self.ng
    }

    fn voltage(&self, x: &DVector<f64>) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| Complex64::from_polar(x[i], x[self.n + i]))
            .collect()
    }

    /// Power-balance residual c(x), stacked [cP(n); cQ(n)].
    fn balance(&self, x: &DVector<f64>) -> (DVector<f64>, Vec<Complex64>) {
        let vc = self.voltage(x);
        let s = bus_injections_complex(self.ybus, &vc);
        let mut c = DVector::zeros(2 * self.n);
        for i in 0..self.n {
            c[i] = -self.demand.pd[i] - s[i].re;
            c[self.n + i] = -self.demand.qd[i] - s[i].im;
        }
        for (g, &b) in self.gen_bus.iter().enumerate() {
            c[b] += x[2 * self.n + g];
            c[self.n + b] += x[2 * self.n + self.ng + g];
        }
        (c, vc)
    }

    fn cost(&self, x: &DVector<f64>) -> f64 {
        let base = self.net.base_mva;
        self.net
            .generators
            .iter()
            .enumerate()
            .map(|(g, gen)| {
                let mw = x[2 * self.n + g] * base;
                gen.cost_c2 * mw * mw + gen.cost_c1 * mw + gen.cost_c0
            })
            .sum()
    }

    fn cost_grad_pg(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let base = self.net.base_mva;
        for (g, gen) in self.net.generators.iter().enumerate() {
            let mw = x[2 * self.n + g] * base;
            out[2 * self.n + g] += (2.0 * gen.cost_c2 * mw + gen.cost_c1) * base;
        }
    }

    /// Gradient of y·c(x) over the voltage block via the injection adjoint.
    fn balance_adjoint(&self, vc: &[Complex64], y: &DVector<f64>, out: &mut DVector<f64>) {
        let w: Vec<Complex64> = (0..self.n)
            .map(|i| Complex64::new(y[i], y[self.n + i]))
            .collect();
        let (dvm, dva) = crate::powerflow::injection_adjoint(self.ybus, vc, &w);
        for i in 0..self.n {
            out[i] -= dvm[i];
            out[self.n + i] -= dva[i];
        }
        for (g, &b) in self.gen_bus.iter().enumerate() {
            out[2 * self.n + g] += y[b];
            out[2 * self.n + self.ng + g] += y[self.n + b];
        }
    }

    /// Dense Jacobian of c(x), 2n × dim.
    fn balance_jacobian(&self, x: &DVector<f64>, vc: &[Complex64]) -> DMatrix<f64> {
        let (n, ng) = (self.n, self.ng);
        let mut jac = DMatrix::zeros(2 * n, self.dim());
        let current = self.ybus.mul_vec(vc);
        for i in 0..n {
            for k in 0..n {
                let coupling = vc[i] * (self.ybus.get(i, k) * vc[k]).conj();
                let mut dva = -coupling;
                let mut dvm = coupling / x[k];
                if i == k {
                    let own = vc[i] * current[i].conj();
                    dva += own;
                    dvm += own / x[i];
                }
                let dva = Complex64::i() * dva;
                jac[(i, k)] = -dvm.re;
                jac[(i, n + k)] = -dva.re;
                jac[(n + i, k)] = -dvm.im;
                jac[(n + i, n + k)] = -dva.im;
            }
        }
        for (g, &b) in self.gen_bus.iter().enumerate() {
            jac[(b, 2 * n + g)] = 1.0;
            jac[(n + b, 2 * n + ng + g)] = 1.0;
        }
        jac
    }

    fn project(&self, x: &mut DVector<f64>) {
        for i in 0..self.dim() {
            x[i] = x[i].clamp(self.lo[i], self.hi[i]);
        }
    }

    /// Sup-norm of the projected gradient step x − Π(x − g).
    fn projected_gradient_norm(&self, x: &DVector<f64>, g: &DVector<f64>) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim() {
            let step = (x[i] - g[i]).clamp(self.lo[i], self.hi[i]);
            worst = worst.max((x[i] - step).abs());
        }
        worst
    }
}

/// Solve the ACOPF locally. `warm` supplies an initial point (typically the
/// nominal-case solution when labeling perturbed scenarios); otherwise the
/// case operating point is used.
pub fn solve_acopf(
    net: &Network,
    ybus: &AdmittanceMatrix,
    demand: &DemandVector,
    config: &SolverConfig,
    warm: Option<&OpfSolution>,
) -> Result<(OpfSolution, SolveDiagnostics), SolveError> {
    let n = net.n();
    let ng = net.generators.len();
    let slack = net.reference_bus();

    let mut lo = DVector::zeros(2 * n + 2 * ng);
    let mut hi = DVector::zeros(2 * n + 2 * ng);
    for (i, b) in net.buses.iter().enumerate() {
        lo[i] = b.v_min;
        hi[i] = b.v_max;
        lo[n + i] = b.ang_min;
        hi[n + i] = b.ang_max;
    }
    // pin the reference angle for a unique rotation datum
    let ref_angle = net.buses[slack].va_operating;
    lo[n + slack] = ref_angle;
    hi[n + slack] = ref_angle;
    for (g, gen) in net.generators.iter().enumerate() {
        lo[2 * n + g] = gen.p_min;
        hi[2 * n + g] = gen.p_max;
        lo[2 * n + ng + g] = gen.q_min;
        hi[2 * n + ng + g] = gen.q_max;
    }

    let ws = Workspace {
        net,
        ybus,
        demand,
        n,
        ng,
        gen_bus: net.generators.iter().map(|g| g.bus).collect(),
        lo,
        hi,
    };

    let mut x = DVector::zeros(ws.dim());
    match warm {
        Some(sol) => {
            for i in 0..n {
                x[i] = sol.voltage.vm[i];
                x[n + i] = sol.voltage.va[i];
            }
            for (g, &b) in ws.gen_bus.iter().enumerate() {
                x[2 * n + g] = sol.gen.pg[b];
                x[2 * n + ng + g] = sol.gen.qg[b];
            }
        }
        None => {
            // A reactive-limited power flow gives a balanced, in-box start;
            // naively projecting the case dispatch into its boxes can leave a
            // large localized imbalance that strands the inner minimizer.
            let (voltage, gen) = qlimited_power_flow(net, ybus, demand);
            for i in 0..n {
                x[i] = voltage.vm[i];
                x[n + i] = voltage.va[i];
            }
            for (g, &b) in ws.gen_bus.iter().enumerate() {
                x[2 * n + g] = gen.pg[b];
                x[2 * n + ng + g] = gen.qg[b];
            }
        }
    }
    ws.project(&mut x);

    // Dual warm start at the system marginal price: with λ_P ≈ −∂f/∂pg the
    // augmented Lagrangian has no incentive to trade feasibility for cheap
    // dispatch at moderate penalties (KKT gives λ_P = −∂f/∂pg at optimality).
    let mut lambda = DVector::zeros(2 * n);
    {
        let base = net.base_mva;
        let mut mc_sum = 0.0;
        for (g, gen) in net.generators.iter().enumerate() {
            let mw = x[2 * n + g] * base;
            mc_sum += (2.0 * gen.cost_c2 * mw + gen.cost_c1) * base;
        }
        let smp = mc_sum / ng.max(1) as f64;
        for i in 0..n {
            lambda[i] = -smp;
        }
    }
    let mut mu = config.penalty_init;
    let mut prev_cnorm = f64::INFINITY;
    let mut inner_steps_total = 0;
    // typical cost-gradient magnitude, for stationarity scaling
    let grad_scale = {
        let mut g = DVector::zeros(ws.dim());
        ws.cost_grad_pg(&x, &mut g);
        g.amax().max(1.0)
    };

    let mut converged = false;
    let mut outer_done = 0;
    let mut nu = 1e-4; // Levenberg damping, carried across outer rounds
    for outer in 0..config.max_outer {
        outer_done = outer + 1;
        inner_steps_total += inner_minimize(&ws, &mut x, &lambda, mu, config, grad_scale, &mut nu);

        let (c, vc) = ws.balance(&x);
        let mean_abs = mean_complex_abs(&c, n);

        // stationarity of the plain Lagrangian at the current multipliers
        let mut gl = DVector::zeros(ws.dim());
        ws.cost_grad_pg(&x, &mut gl);
        ws.balance_adjoint(&vc, &lambda, &mut gl);
        let pgn = ws.projected_gradient_norm(&x, &(gl.clone() / grad_scale));
        log::debug!(
            "acopf outer {outer}: mu {mu:.1e} |c|inf {:.3e} mean {mean_abs:.3e} pgn {pgn:.3e} cost {:.4}",
            c.amax(),
            ws.cost(&x)
        );

        if mean_abs < 0.25 * config.feas_tol && pgn < config.opt_tol {
            converged = true;
            break;
        }

        // Safeguarded multiplier scheme: accept a dual update only when the
        // constraint norm shrank enough, otherwise raise the penalty and
        // re-minimize at the same multipliers.
        let cnorm = c.amax();
        let at_cap = mu >= 1e7;
        let improved = cnorm <= 0.25 * prev_cnorm;
        if improved || cnorm < config.feas_tol || (at_cap && cnorm < 1e-3) {
            // a small-residual dual step is safe and keeps the multipliers
            // contracting toward their true values
            lambda += &c * mu;
            prev_cnorm = cnorm;
        }
        if !improved {
            mu = (mu * config.penalty_growth).min(1e7);
        }
    }

    let (c, _) = ws.balance(&x);
    let final_residual = mean_complex_abs(&c, n);
    if !converged {
        return Err(SolveError::NotConverged {
            outer: outer_done,
            residual: final_residual,
        });
    }

    let voltage = VoltageProfile {
        vm: (0..n).map(|i| x[i]).collect(),
        va: (0..n).map(|i| x[n + i]).collect(),
    };
    let mut gen = GenSetpoints::zeros(n);
    for (g, &b) in ws.gen_bus.iter().enumerate() {
        gen.pg[b] = x[2 * n + g];
        gen.qg[b] = x[2 * n + ng + g];
    }
    let solution = OpfSolution::assemble(net, ybus, voltage, gen, demand, SolutionSource::InternalSolver);
    let line_violations = branch_flows(net, &solution.voltage)
        .iter()
        .filter(|f| f.violation)
        .count();
    if line_violations > 0 {
        log::warn!(
            "solve_acopf: {line_violations} branch rating violation(s) at the optimum (reported, not enforced)"
        );
    }
    let diag = SolveDiagnostics {
        outer_rounds: outer_done,
        inner_steps: inner_steps_total,
        final_residual: solution.feasibility.mean_abs,
        line_violations,
    };
    Ok((solution, diag))
}

/// Conventional power flow with generator reactive limits enforced by PV→PQ
/// switching: buses whose recovered reactive output violates a limit are
/// re-solved as load buses with the injection pinned at that limit. Returns
/// the voltage profile (magnitudes projected into their boxes) and an in-box
/// dispatch, a balanced starting point for the optimizer.
fn qlimited_power_flow(
    net: &Network,
    ybus: &AdmittanceMatrix,
    demand: &DemandVector,
) -> (VoltageProfile, GenSetpoints) {
    use crate::grid_model::BusKind;
    use crate::powerflow::{solve_newton_raphson_with, NrOptions, VoltageProfile as VP};

    let n = net.n();
    let slack = net.reference_bus();
    let mut work = net.clone();
    let mut dem = demand.clone();
    let mut dispatch = vec![0.0; n];
    let mut vset = vec![1.0; n];
    for g in &net.generators {
        dispatch[g.bus] += g.pg_setpoint;
        vset[g.bus] = g.vg_setpoint;
    }
    let opts = NrOptions {
        tol: 1e-9,
        max_iter: 30,
    };

    let mut last = None;
    for _ in 0..6 {
        let pf = solve_newton_raphson_with(&work, ybus, &dem, &dispatch, &vset, &VP::flat(n), &opts);
        if !pf.converged {
            break;
        }
        let mut switched = 0;
        for g in &net.generators {
            let b = g.bus;
            if b == slack || work.buses[b].kind == BusKind::Load {
                continue;
            }
            let qg = pf.gen.qg[b];
            let pinned = if qg > g.q_max {
                Some(g.q_max)
            } else if qg < g.q_min {
                Some(g.q_min)
            } else {
                None
            };
            if let Some(limit) = pinned {
                work.buses[b].kind = BusKind::Load;
                // net reactive injection held at the limit; active stays the
                // dispatched value, both folded into the PQ specification
                dem.qd[b] = demand.qd[b] - limit;
                dem.pd[b] = demand.pd[b] - dispatch[b];
                dispatch[b] = 0.0;
                switched += 1;
            }
        }
        last = Some(pf);
        if switched == 0 {
            break;
        }
    }

    match last {
        Some(pf) => {
            let mut voltage = pf.voltage;
            for b in &net.buses {
                voltage.vm[b.id] = voltage.vm[b.id].clamp(b.v_min, b.v_max);
                voltage.va[b.id] = voltage.va[b.id].clamp(b.ang_min, b.ang_max);
            }
            // recover the dispatch against the true demand and project
            let mut gen = crate::powerflow::recover_generation(net, ybus, &voltage, demand);
            for g in &net.generators {
                gen.pg[g.bus] = gen.pg[g.bus].clamp(g.p_min, g.p_max);
                gen.qg[g.bus] = gen.qg[g.bus].clamp(g.q_min, g.q_max);
            }
            (voltage, gen)
        }
        None => {
            // fall back to the stored operating point
            let voltage = VoltageProfile::from_operating_point(net);
            let mut gen = GenSetpoints::zeros(n);
            for g in &net.generators {
                gen.pg[g.bus] = g.pg_setpoint.clamp(g.p_min, g.p_max);
                gen.qg[g.bus] = g.qg_setpoint.clamp(g.q_min, g.q_max);
            }
            (voltage, gen)
        }
    }
}

fn mean_complex_abs(c: &DVector<f64>, n: usize) -> f64 {
    (0..n)
        .map(|i| Complex64::new(c[i], c[n + i]).norm())
        .sum::<f64>()
        / n as f64
}

/// Augmented-Lagrangian value.
fn al_value(ws: &Workspace, x: &DVector<f64>, lambda: &DVector<f64>, mu: f64) -> f64 {
    let (c, _) = ws.balance(x);
    ws.cost(x) + lambda.dot(&c) + 0.5 * mu * c.norm_squared()
}

/// Projected damped Gauss-Newton descent on the augmented Lagrangian, with an
/// active-set reduction: variables pinned at a bound with an inward-pointing
/// gradient are frozen and the Newton system is solved over the free set.
/// Returns the number of accepted steps.
fn inner_minimize(
    ws: &Workspace,
    x: &mut DVector<f64>,
    lambda: &DVector<f64>,
    mu: f64,
    config: &SolverConfig,
    grad_scale: f64,
    nu: &mut f64,
) -> usize {
    let dim = ws.dim();
    let mut steps = 0;
    let mut phi = al_value(ws, x, lambda, mu);
    let mut stagnant = 0;

    for _ in 0..config.max_inner {
        let (c, vc) = ws.balance(x);
        let y = lambda + &c * mu;
        let mut grad = DVector::zeros(dim);
        ws.cost_grad_pg(x, &mut grad);
        ws.balance_adjoint(&vc, &y, &mut grad);

        let pgn = ws.projected_gradient_norm(x, &(grad.clone() / grad_scale));
        if pgn < 0.5 * config.opt_tol {
            break;
        }

        let free: Vec<usize> = (0..dim)
            .filter(|&i| {
                let at_lo = x[i] <= ws.lo[i] && grad[i] > 0.0;
                let at_hi = x[i] >= ws.hi[i] && grad[i] < 0.0;
                ws.lo[i] < ws.hi[i] && !at_lo && !at_hi
            })
            .collect();
        if free.is_empty() {
            break;
        }

        // Gauss-Newton model over the free set: H = ∇²f (diag on pg) + μ JᵀJ
        let jac = ws.balance_jacobian(x, &vc);
        let mut h = jac.transpose() * &jac * mu;
        let base = ws.net.base_mva;
        for (g, gen) in ws.net.generators.iter().enumerate() {
            h[(2 * ws.n + g, 2 * ws.n + g)] += 2.0 * gen.cost_c2 * base * base;
        }
        let nf = free.len();
        let mut h_free = DMatrix::zeros(nf, nf);
        let mut g_free = DVector::zeros(nf);
        for (r, &i) in free.iter().enumerate() {
            g_free[r] = grad[i];
            for (cidx, &j) in free.iter().enumerate() {
                h_free[(r, cidx)] = h[(i, j)];
            }
        }
        // Levenberg damping relative to the largest curvature present: JᵀJ is
        // rank-deficient (rank ≤ 2n) and its null directions carry almost no
        // curvature, so an absolute floor would let them blow up.
        let h_scale = (0..nf).map(|i| h_free[(i, i)].abs()).fold(1.0f64, f64::max);

        // Levenberg-Marquardt ratio control: accept when the actual reduction
        // tracks the quadratic model, shrink the damping on good agreement,
        // raise it otherwise.
        let mut accepted = false;
        for _ in 0..16 {
            let mut h_damped = h_free.clone();
            for i in 0..nf {
                h_damped[(i, i)] += *nu * h_scale;
            }
            let Some(chol) = h_damped.cholesky() else {
                *nu = (*nu * 10.0).max(1e-12);
                continue;
            };
            let d_free = chol.solve(&(-&g_free));
            let predicted = -(g_free.dot(&d_free) + 0.5 * (&h_free * &d_free).dot(&d_free));
            if !predicted.is_finite() || predicted <= 0.0 {
                *nu = (*nu * 10.0).max(1e-12);
                continue;
            }
            let mut xt = x.clone();
            for (r, &i) in free.iter().enumerate() {
                xt[i] += d_free[r];
            }
            ws.project(&mut xt);
            let phit = al_value(ws, &xt, lambda, mu);
            let actual = phi - phit;
            let ratio = actual / predicted;
            if ratio > 1e-3 {
                let moved = (&xt - &*x).amax();
                *x = xt;
                phi = phit;
                accepted = true;
                if ratio > 0.7 {
                    *nu = (*nu * 0.25).max(1e-14);
                } else if ratio < 0.2 {
                    *nu *= 3.0;
                }
                if moved < 1e-11 {
                    stagnant += 1;
                } else {
                    stagnant = 0;
                }
                break;
            }
            *nu *= 10.0;
        }
        if !accepted || stagnant >= 3 {
            break;
        }
        steps += 1;
    }
    steps
}

/// One imported labeled sample.
#[derive(Debug, Clone)]
pub struct ImportedSample {
    pub scenario_id: usize,
    pub demand: DemandVector,
    pub solution: OpfSolution,
}

/// A row that failed import validation, with the reason.
#[derive(Debug, Clone)]
pub struct RejectedRow {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug)]
pub struct ImportOutcome {
    pub samples: Vec<ImportedSample>,
    pub rejects: Vec<RejectedRow>,
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty file: no data rows")]
    Empty,
}

/// Residual threshold a row must satisfy to be accepted.
pub const IMPORT_RESIDUAL_TOL: f64 = 1e-4;
/// Slack allowed on box constraints during import validation.
pub const IMPORT_BOX_TOL: f64 = 1e-6;

/// Read a labeled-sample CSV (the dataset schema) and validate every row:
/// power-balance residual below [`IMPORT_RESIDUAL_TOL`] and all box
/// constraints within [`IMPORT_BOX_TOL`]. Failing rows are rejected with a
/// reason, not fatal.
pub fn import_labels(path: &std::path::Path, net: &Network) -> Result<ImportOutcome, ImportError> {
    let text = std::fs::read_to_string(path).map_err(|e| ImportError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    import_labels_from_str(&text, net)
}

pub fn import_labels_from_str(text: &str, net: &Network) -> Result<ImportOutcome, ImportError> {
    let n = net.n();
    let ybus = crate::grid_model::build_ybus(net);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| ImportError::Schema(e.to_string()))?
        .clone();
    let expected = crate::dataset::sample_csv_header(net);
    if headers.iter().collect::<Vec<_>>() != expected.iter().map(|s| s.as_str()).collect::<Vec<_>>() {
        if headers.len() != expected.len() {
            return Err(ImportError::Dimension(format!(
                "expected {} columns for a {n}-bus network, found {}",
                expected.len(),
                headers.len()
            )));
        }
        return Err(ImportError::Schema(format!(
            "header does not match the dataset schema (expected leading columns {:?}…)",
            &expected[..3.min(expected.len())]
        )));
    }

    let gen_buses: Vec<usize> = net.generators.iter().map(|g| g.bus).collect();
    let mut samples = Vec::new();
    let mut rejects = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let line = k + 2; // header is line 1
        let record = record.map_err(|e| ImportError::Schema(e.to_string()))?;
        let mut vals = Vec::with_capacity(record.len());
        let mut bad = None;
        for f in record.iter() {
            match f.trim().parse::<f64>() {
                Ok(v) => vals.push(v),
                Err(_) => {
                    bad = Some(format!("unparsable field '{f}'"));
                    break;
                }
            }
        }
        if let Some(reason) = bad {
            rejects.push(RejectedRow { line, reason });
            continue;
        }
        if vals.len() != expected.len() {
            rejects.push(RejectedRow {
                line,
                reason: format!("expected {} fields, found {}", expected.len(), vals.len()),
            });
            continue;
        }
        let scenario_id = vals[0] as usize;
        let mut at = 1;
        let mut take = |count: usize| -> Vec<f64> {
            let out = vals[at..at + count].to_vec();
            at += count;
            out
        };
        let demand = DemandVector {
            pd: take(n),
            qd: take(n),
        };
        let voltage = VoltageProfile {
            vm: take(n),
            va: take(n),
        };
        let pg_g = take(gen_buses.len());
        let qg_g = take(gen_buses.len());
        let objective = vals[at];
        let mut gen = GenSetpoints::zeros(n);
        for (g, &b) in gen_buses.iter().enumerate() {
            gen.pg[b] = pg_g[g];
            gen.qg[b] = qg_g[g];
        }

        if let Some(reason) = validate_label(net, &voltage, &gen) {
            rejects.push(RejectedRow { line, reason });
            continue;
        }
        let report = residual_check(&ybus, &voltage, &demand, &gen);
        if report.mean_abs >= IMPORT_RESIDUAL_TOL {
            rejects.push(RejectedRow {
                line,
                reason: format!("power-balance residual {:.3e} above threshold", report.mean_abs),
            });
            continue;
        }
        let cost = generation_cost(net, &gen);
        if (cost - objective).abs() > 1e-9 * objective.abs().max(1.0) {
            rejects.push(RejectedRow {
                line,
                reason: format!("objective mismatch: stored {objective}, recomputed {cost}"),
            });
            continue;
        }
        samples.push(ImportedSample {
            scenario_id,
            demand,
            solution: OpfSolution {
                voltage,
                gen,
                objective,
                feasibility: FeasibilitySummary {
                    mean_abs: report.mean_abs,
                    max_abs: report.max_abs,
                },
                source: SolutionSource::Imported,
            },
        });
    }
    if samples.is_empty() && rejects.is_empty() {
        return Err(ImportError::Empty);
    }
    Ok(ImportOutcome { samples, rejects })
}

/// Box-constraint check shared by import validation; returns a rejection
/// reason when some bound is violated beyond [`IMPORT_BOX_TOL`].
pub fn validate_label(net: &Network, voltage: &VoltageProfile, gen: &GenSetpoints) -> Option<String> {
    for b in &net.buses {
        let vm = voltage.vm[b.id];
        if vm < b.v_min - IMPORT_BOX_TOL || vm > b.v_max + IMPORT_BOX_TOL {
            return Some(format!("bound violation: vm {} at bus {} outside [{}, {}]", vm, b.ext_id, b.v_min, b.v_max));
        }
        let va = voltage.va[b.id];
        if va < b.ang_min - IMPORT_BOX_TOL || va > b.ang_max + IMPORT_BOX_TOL {
            return Some(format!("bound violation: angle {} at bus {}", va, b.ext_id));
        }
    }
    for g in &net.generators {
        let pg = gen.pg[g.bus];
        if pg < g.p_min - IMPORT_BOX_TOL || pg > g.p_max + IMPORT_BOX_TOL {
            return Some(format!("bound violation: pg {} at bus {}", pg, net.buses[g.bus].ext_id));
        }
        let qg = gen.qg[g.bus];
        if qg < g.q_min - IMPORT_BOX_TOL || qg > g.q_max + IMPORT_BOX_TOL {
            return Some(format!("bound violation: qg {} at bus {}", qg, net.buses[g.bus].ext_id));
        }
    }
    None
}

#[cfg(test)]
mod tests;
