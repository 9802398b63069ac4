//! Branch-flow (DistFlow) model of a radial feeder.
//!
//! Two independent routes to the same physics live here:
//!
//! * [`sweep_powerflow`]: the exact nonlinear branch-flow equations solved by
//!   backward (flow aggregation) / forward (voltage update) sweeps for fixed
//!   nodal injections;
//! * [`add_network_block`] / [`build_socp_opf`]: the same equations with the
//!   current definition relaxed to a rotated second-order cone,
//!   `l·v² ≥ f_p² + f_q²`, for use inside an optimization.
//!
//! Squared voltage magnitudes (`w = v²`) are the optimization variables;
//! voltage bounds are imposed as `vmin² ≤ w ≤ vmax²` and their multipliers are
//! reported per unit of `w`.

use serde::Serialize;
use thiserror::Error;

use crate::conic::{solve_conic, Affine, ConicProgram, ConicSolution, RowId, SolverError, VarId};
use crate::netmodel::{LineId, NetworkCase};

/// Tolerance on squared-voltage updates between sweeps.
pub const SWEEP_TOL: f64 = 1e-10;
pub const MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error("sweep did not converge in period {period}: residual {residual:e}")]
    NonConvergence { period: usize, residual: f64 },
    #[error("voltage collapse at node index {node} in period {period}")]
    VoltageCollapse { period: usize, node: usize },
    #[error("injection table does not match the network: {0}")]
    Shape(String),
}

/// Net nodal injections, `[t][node index]`, pu. Positive = into the network.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalInjections {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

impl NodalInjections {
    /// Fixed loads as negative injections, zero at prosumer nodes' active part.
    pub fn fixed_loads(case: &NetworkCase) -> Self {
        let (horizon, n) = (case.horizon(), case.num_nodes());
        let mut p = vec![vec![0.0; n]; horizon];
        let mut q = vec![vec![0.0; n]; horizon];
        for t in 0..horizon {
            for k in 0..n {
                if k != case.root_index() {
                    p[t][k] = -case.p_load(k, t);
                    q[t][k] = -case.q_load(k, t);
                }
            }
        }
        NodalInjections { p, q }
    }

    /// Fixed loads plus active injections at the given node indices.
    pub fn with_prosumers(case: &NetworkCase, nodes: &[usize], injection: &[Vec<f64>]) -> Self {
        let mut inj = Self::fixed_loads(case);
        for (i, &k) in nodes.iter().enumerate() {
            for t in 0..case.horizon() {
                inj.p[t][k] += injection[i][t];
            }
        }
        inj
    }
}

/// Branch-flow state of one period.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodFlow {
    /// Sending-end active flow per line, pu (positive away from the root).
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Squared current magnitude per line, pu.
    pub l: Vec<f64>,
    /// Squared voltage magnitude per node index.
    pub w: Vec<f64>,
    pub p0: f64,
    pub q0: f64,
}

/// Branch-flow state over the horizon (one scenario).
#[derive(Clone, Debug, PartialEq)]
pub struct PowerFlowSolution {
    pub periods: Vec<PeriodFlow>,
    /// Upstream node index of every line, so the solution can be checked on its own.
    pub upstream: Vec<usize>,
    pub resistance: Vec<f64>,
    pub reactance: Vec<f64>,
}

/// One CSV row of a serialized [`PowerFlowSolution`].
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct FlowRecord {
    pub scenario: usize,
    pub t: usize,
    pub element_type: String,
    pub element_id: usize,
    pub quantity: String,
    pub value: f64,
}

impl PeriodFlow {
    pub fn voltage(&self, node_index: usize) -> f64 {
        self.w[node_index].sqrt()
    }
}

impl PowerFlowSolution {
    pub fn horizon(&self) -> usize {
        self.periods.len()
    }

    /// Rows `(scenario, t, element_type, element_id, quantity, value)`; node
    /// rows use node ids, line rows use line indices.
    pub fn records(&self, case: &NetworkCase, scenario: usize) -> Vec<FlowRecord> {
        let mut rows = Vec::new();
        let mut push = |t: usize, ty: &str, id: usize, qty: &str, value: f64| {
            rows.push(FlowRecord {
                scenario,
                t,
                element_type: ty.to_string(),
                element_id: id,
                quantity: qty.to_string(),
                value,
            })
        };
        for (t, f) in self.periods.iter().enumerate() {
            for j in 0..f.p.len() {
                push(t, "line", j, "fp", f.p[j]);
                push(t, "line", j, "fq", f.q[j]);
                push(t, "line", j, "l", f.l[j]);
            }
            for (k, &id) in case.nodes.iter().enumerate() {
                push(t, "node", id, "v", f.voltage(k));
            }
            push(t, "root", 0, "p0", f.p0);
            push(t, "root", 0, "q0", f.q0);
        }
        rows
    }

    /// Maximum voltage-bound violation (pu of magnitude) over nodes and periods.
    pub fn max_voltage_violation(&self, case: &NetworkCase) -> f64 {
        let mut worst: f64 = 0.0;
        for f in &self.periods {
            for k in 0..case.num_nodes() {
                let v = f.voltage(k);
                worst = worst.max(v - case.vmax_at(k)).max(case.vmin_at(k) - v);
            }
        }
        worst
    }

    /// `(node index, period)` pairs whose voltage lies outside the bounds by more than `tol`.
    pub fn voltage_violations(&self, case: &NetworkCase, tol: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (t, f) in self.periods.iter().enumerate() {
            for k in 0..case.num_nodes() {
                let v = f.voltage(k);
                if v > case.vmax_at(k) + tol || v < case.vmin_at(k) - tol {
                    out.push((k, t));
                }
            }
        }
        out
    }

    /// `(line, period)` pairs where either line end exceeds its rating by more than `tol`.
    pub fn line_overloads(&self, case: &NetworkCase, tol: f64) -> Vec<(LineId, usize)> {
        let mut out = Vec::new();
        for (t, f) in self.periods.iter().enumerate() {
            for (j, line) in case.lines.iter().enumerate() {
                let send = f.p[j].hypot(f.q[j]);
                let recv = (f.p[j] - line.r * f.l[j]).hypot(f.q[j] - line.x * f.l[j]);
                if send.max(recv) > line.s_max + tol {
                    out.push((j, t));
                }
            }
        }
        out
    }

    /// Network loss per period, Σ_j R_j l_j (pu).
    pub fn losses(&self) -> Vec<f64> {
        self.periods
            .iter()
            .map(|f| f.l.iter().zip(&self.resistance).map(|(l, r)| r * l).sum())
            .collect()
    }
}

/// Exact power flow for one period by backward/forward sweep from a flat start.
pub fn sweep_period(
    case: &NetworkCase,
    period: usize,
    p_inj: &[f64],
    q_inj: &[f64],
) -> Result<PeriodFlow, PowerFlowError> {
    let n = case.num_nodes();
    let m = case.num_lines();
    if p_inj.len() != n || q_inj.len() != n {
        return Err(PowerFlowError::Shape(format!("expected {n} nodal values")));
    }
    let order: Vec<LineId> = case.lines_root_first().collect();
    let w0 = case.v0 * case.v0;
    let mut w = vec![w0; n];
    let mut p = vec![0.0; m];
    let mut q = vec![0.0; m];
    let mut l = vec![0.0; m];
    let mut residual = f64::INFINITY;

    for _ in 0..MAX_SWEEPS {
        // backward: aggregate downstream withdrawals and losses
        for &j in order.iter().rev() {
            let k = case.line_down(j);
            let line = &case.lines[j];
            let (mut pj, mut qj) = (-p_inj[k], -q_inj[k]);
            for &c in case.children_lines(k) {
                pj += p[c];
                qj += q[c];
            }
            p[j] = pj + line.r * l[j];
            q[j] = qj + line.x * l[j];
        }
        for j in 0..m {
            l[j] = (p[j] * p[j] + q[j] * q[j]) / w[case.line_up(j)];
        }
        // forward: voltage drop along every line
        residual = 0.0;
        for &j in &order {
            let (i, k) = (case.line_up(j), case.line_down(j));
            let line = &case.lines[j];
            let wk = w[i] - 2.0 * (line.r * p[j] + line.x * q[j])
                + (line.r * line.r + line.x * line.x) * l[j];
            if !(wk > 0.0) {
                return Err(PowerFlowError::VoltageCollapse { period, node: k });
            }
            residual = f64::max(residual, (wk - w[k]).abs());
            w[k] = wk;
        }
        if residual <= SWEEP_TOL {
            let root = case.root_index();
            let p0 = case.children_lines(root).iter().map(|&c| p[c]).sum::<f64>() - p_inj[root];
            let q0 = case.children_lines(root).iter().map(|&c| q[c]).sum::<f64>() - q_inj[root];
            return Ok(PeriodFlow { p, q, l, w, p0, q0 });
        }
    }
    Err(PowerFlowError::NonConvergence { period, residual })
}

/// Exact branch-flow solution for every period of the horizon.
pub fn sweep_powerflow(
    case: &NetworkCase,
    injections: &NodalInjections,
) -> Result<PowerFlowSolution, PowerFlowError> {
    if injections.p.len() != case.horizon() || injections.q.len() != case.horizon() {
        return Err(PowerFlowError::Shape(format!("expected {} periods", case.horizon())));
    }
    let periods = (0..case.horizon())
        .map(|t| sweep_period(case, t, &injections.p[t], &injections.q[t]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(solution_frame(case, periods))
}

fn solution_frame(case: &NetworkCase, periods: Vec<PeriodFlow>) -> PowerFlowSolution {
    PowerFlowSolution {
        periods,
        upstream: (0..case.num_lines()).map(|j| case.line_up(j)).collect(),
        resistance: case.lines.iter().map(|l| l.r).collect(),
        reactance: case.lines.iter().map(|l| l.x).collect(),
    }
}

/// Largest relative cone gap `(l·v_up² − f_p² − f_q²) / max(1, f_p² + f_q²)`.
pub fn check_exactness(sol: &PowerFlowSolution) -> f64 {
    let mut gap: f64 = 0.0;
    for f in &sol.periods {
        for j in 0..f.l.len() {
            let s2 = f.p[j] * f.p[j] + f.q[j] * f.q[j];
            let g = (f.l[j] * f.w[sol.upstream[j]] - s2) / s2.max(1.0);
            gap = gap.max(g);
        }
    }
    gap
}

/// Σ_t π_t ΔT Σ_j R_j l_{j,t} for one scenario.
pub fn loss_cost(sol: &PowerFlowSolution, pi: &[f64], delta_t: f64) -> f64 {
    sol.losses().iter().zip(pi).map(|(loss, price)| price * delta_t * loss).sum()
}

/// Variables and constraint rows of one (period, scenario) network block.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkBlock {
    pub p: Vec<VarId>,
    pub q: Vec<VarId>,
    pub l: Vec<VarId>,
    /// Squared voltage per node index; `None` at the root (fixed to v0²).
    pub w: Vec<Option<VarId>>,
    pub p0: VarId,
    pub q0: VarId,
    pub balance_p: Vec<Option<RowId>>,
    pub balance_q: Vec<Option<RowId>>,
    pub drop_rows: Vec<RowId>,
    pub vmax_rows: Vec<Option<RowId>>,
    pub vmin_rows: Vec<Option<RowId>>,
    pub cone_rows: Vec<RowId>,
    pub send_rows: Vec<RowId>,
    pub recv_rows: Vec<RowId>,
    pub root_p_row: RowId,
    pub root_q_row: RowId,
}

impl NetworkBlock {
    fn w_expr(&self, case: &NetworkCase, k: usize) -> Affine {
        match self.w[k] {
            Some(v) => Affine::var(v),
            None => Affine::constant(case.v0 * case.v0),
        }
    }

    pub fn extract(&self, case: &NetworkCase, x: &[f64]) -> PeriodFlow {
        PeriodFlow {
            p: self.p.iter().map(|&v| x[v]).collect(),
            q: self.q.iter().map(|&v| x[v]).collect(),
            l: self.l.iter().map(|&v| x[v]).collect(),
            w: (0..case.num_nodes()).map(|k| self.w_expr(case, k).eval(x)).collect(),
            p0: x[self.p0],
            q0: x[self.q0],
        }
    }
}

/// Adds the relaxed branch-flow equations of one period to `program`.
///
/// `extra_injection[k]` is an affine active injection added at node index `k`
/// on top of the fixed loads (used for prosumer injections). The objective is
/// left untouched.
pub fn add_network_block(
    program: &mut ConicProgram,
    case: &NetworkCase,
    period: usize,
    extra_injection: &[Option<Affine>],
) -> NetworkBlock {
    let n = case.num_nodes();
    let m = case.num_lines();
    let root = case.root_index();
    let p = program.add_vars(m);
    let q = program.add_vars(m);
    let l = program.add_vars(m);
    let w: Vec<Option<VarId>> = (0..n).map(|k| (k != root).then(|| program.add_var())).collect();
    let p0 = program.add_var();
    let q0 = program.add_var();
    let w_expr = |k: usize| match w[k] {
        Some(v) => Affine::var(v),
        None => Affine::constant(case.v0 * case.v0),
    };

    let mut balance_p = vec![None; n];
    let mut balance_q = vec![None; n];
    for k in 0..n {
        let Some(j) = case.parent_line(k) else { continue };
        let line = &case.lines[j];
        // f_j − R l_j − Σ_children f_c = withdrawal_k
        let mut bp = Affine::var(p[j]).term(l[j], -line.r).plus(-case.p_load(k, period));
        let mut bq = Affine::var(q[j]).term(l[j], -line.x).plus(-case.q_load(k, period));
        for &c in case.children_lines(k) {
            bp = bp.term(p[c], -1.0);
            bq = bq.term(q[c], -1.0);
        }
        if let Some(extra) = &extra_injection[k] {
            bp.terms.extend(extra.terms.iter().copied());
            bp.constant += extra.constant;
        }
        balance_p[k] = Some(program.add_eq(&bp));
        balance_q[k] = Some(program.add_eq(&bq));
    }
    let mut root_p = Affine::var(p0);
    let mut root_q = Affine::var(q0);
    for &c in case.children_lines(root) {
        root_p = root_p.term(p[c], -1.0);
        root_q = root_q.term(q[c], -1.0);
    }
    let root_p_row = program.add_eq(&root_p);
    let root_q_row = program.add_eq(&root_q);

    let mut drop_rows = Vec::with_capacity(m);
    let mut cone_rows = Vec::with_capacity(m);
    let mut send_rows = Vec::with_capacity(m);
    let mut recv_rows = Vec::with_capacity(m);
    for j in 0..m {
        let line = &case.lines[j];
        let (i, k) = (case.line_up(j), case.line_down(j));
        let z2 = line.r * line.r + line.x * line.x;
        // w_k = w_i − 2(R f_p + X f_q) + |z|² l
        let mut drop = w_expr(k).term(p[j], 2.0 * line.r).term(q[j], 2.0 * line.x).term(l[j], -z2);
        let wi = w_expr(i);
        drop.terms.extend(wi.terms.iter().map(|&(v, c)| (v, -c)));
        drop.constant -= wi.constant;
        drop_rows.push(program.add_eq(&drop));

        // l·w_i ≥ f_p² + f_q²  ⇔  ‖(2f_p, 2f_q, l − w_i)‖ ≤ l + w_i
        let mut sum = Affine::var(l[j]);
        sum.terms.extend(wi.terms.iter().copied());
        sum.constant += wi.constant;
        let mut diff = Affine::var(l[j]);
        diff.terms.extend(wi.terms.iter().map(|&(v, c)| (v, -c)));
        diff.constant -= wi.constant;
        cone_rows.push(program.add_soc(
            &sum,
            &[Affine::constant(0.0).term(p[j], 2.0), Affine::constant(0.0).term(q[j], 2.0), diff],
        ));

        let rating = Affine::constant(line.s_max);
        send_rows.push(program.add_soc(&rating, &[Affine::var(p[j]), Affine::var(q[j])]));
        recv_rows.push(program.add_soc(
            &rating,
            &[Affine::var(p[j]).term(l[j], -line.r), Affine::var(q[j]).term(l[j], -line.x)],
        ));
    }

    let mut vmax_rows = vec![None; n];
    let mut vmin_rows = vec![None; n];
    for k in 0..n {
        if let Some(v) = w[k] {
            let hi = case.vmax_at(k);
            let lo = case.vmin_at(k);
            vmax_rows[k] = Some(program.add_le(&Affine::var(v).plus(-hi * hi)));
            vmin_rows[k] = Some(program.add_le(&Affine::constant(lo * lo).term(v, -1.0)));
        }
    }

    NetworkBlock {
        p,
        q,
        l,
        w,
        p0,
        q0,
        balance_p,
        balance_q,
        drop_rows,
        vmax_rows,
        vmin_rows,
        cone_rows,
        send_rows,
        recv_rows,
        root_p_row,
        root_q_row,
    }
}

/// Inputs of the DSO envelope OPF.
#[derive(Clone, Debug)]
pub struct OpfInputs<'a> {
    /// Node index of every prosumer, in prosumer order.
    pub prosumer_nodes: &'a [usize],
    /// Prosumer-side asks `P^e[i][t]`.
    pub asks: &'a [Vec<f64>],
    /// DOE prices `Ψ[i][t]`.
    pub psi: &'a [Vec<f64>],
    pub rho: f64,
    pub scenarios: usize,
    pub pi: &'a [f64],
}

/// Assembled DSO program with its variable layout.
#[derive(Clone, Debug)]
pub struct OpfProgram {
    pub program: ConicProgram,
    /// Allocation variables `P^{dso,e}[i][t]`.
    pub allocation: Vec<Vec<VarId>>,
    /// Network blocks `[s][t]`, scenario `s` injecting `(s+1)/S` of the allocation.
    pub blocks: Vec<Vec<NetworkBlock>>,
    pub scenarios: usize,
}

/// Scenario-averaged loss cost of `J` for one block: adds `(1/S) π_t ΔT R_j l_j`.
pub fn add_loss_cost(program: &mut ConicProgram, case: &NetworkCase, block: &NetworkBlock, pi_t: f64, scenarios: usize) {
    let weight = pi_t * case.delta_t / scenarios as f64;
    for (j, line) in case.lines.iter().enumerate() {
        program.add_linear_cost(block.l[j], weight * line.r);
    }
}

/// Builds the relaxed envelope OPF solved by the DSO.
///
/// For every scenario `s = 1..S` the prosumer injections are fixed at
/// `(s/S)·P^{dso,e}`, other loads at their forecast. The objective is the
/// scenario-averaged loss cost plus the augmented-Lagrangian coupling with
/// the asks, `Σ ΔT [Ψ (P^{dso,e} − P^e) + ρ/2 (P^{dso,e} − P^e)²]`.
pub fn build_socp_opf(case: &NetworkCase, inputs: &OpfInputs<'_>) -> OpfProgram {
    let horizon = case.horizon();
    let scenarios = inputs.scenarios.max(1);
    let mut program = ConicProgram::new();
    let allocation: Vec<Vec<VarId>> = inputs
        .prosumer_nodes
        .iter()
        .map(|_| program.add_vars(horizon))
        .collect();

    let mut blocks = Vec::with_capacity(scenarios);
    for s in 1..=scenarios {
        let share = s as f64 / scenarios as f64;
        let mut per_t = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let mut extra = vec![None; case.num_nodes()];
            for (i, &k) in inputs.prosumer_nodes.iter().enumerate() {
                extra[k] = Some(Affine::constant(0.0).term(allocation[i][t], share));
            }
            let block = add_network_block(&mut program, case, t, &extra);
            add_loss_cost(&mut program, case, &block, inputs.pi[t], scenarios);
            per_t.push(block);
        }
        blocks.push(per_t);
    }

    let dt = case.delta_t;
    for (i, vars) in allocation.iter().enumerate() {
        for t in 0..horizon {
            let gap = Affine::var(vars[t]).plus(-inputs.asks[i][t]);
            program.add_linear_cost(vars[t], dt * inputs.psi[i][t]);
            program.add_constant_cost(-dt * inputs.psi[i][t] * inputs.asks[i][t]);
            program.add_square_cost(&gap, dt * inputs.rho);
        }
    }
    OpfProgram { program, allocation, blocks, scenarios }
}

/// Network multipliers of one solved program, in money per pu·h.
///
/// `eta`/`delta` are the multipliers of the sending/receiving-end ratings in
/// their quadratic form `f_p² + f_q² ≤ S²`; `tau_plus`/`tau_minus` are those of
/// the upper/lower squared-voltage bounds; `omega_p`/`omega_q` belong to the
/// root power balance. All are indexed `[s][t][element]`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct NetworkDuals {
    pub eta: Vec<Vec<Vec<f64>>>,
    pub delta: Vec<Vec<Vec<f64>>>,
    pub tau_plus: Vec<Vec<Vec<f64>>>,
    pub tau_minus: Vec<Vec<Vec<f64>>>,
    pub omega_p: Vec<Vec<f64>>,
    pub omega_q: Vec<Vec<f64>>,
}

impl NetworkDuals {
    pub fn from_blocks(case: &NetworkCase, blocks: &[Vec<NetworkBlock>], z: &[f64]) -> Self {
        let dt = case.delta_t;
        let mut duals = NetworkDuals::default();
        for per_t in blocks {
            let mut eta = Vec::new();
            let mut delta = Vec::new();
            let mut tp = Vec::new();
            let mut tm = Vec::new();
            let mut op = Vec::new();
            let mut oq = Vec::new();
            for b in per_t {
                // SOC ‖u‖ ≤ S has multiplier (z₀, z_u); the quadratic form's is z₀ / 2S.
                eta.push(
                    b.send_rows.iter().zip(&case.lines).map(|(&r, line)| z[r] / (2.0 * line.s_max) / dt).collect(),
                );
                delta.push(
                    b.recv_rows.iter().zip(&case.lines).map(|(&r, line)| z[r] / (2.0 * line.s_max) / dt).collect(),
                );
                tp.push(b.vmax_rows.iter().map(|r| r.map_or(0.0, |r| z[r] / dt)).collect());
                tm.push(b.vmin_rows.iter().map(|r| r.map_or(0.0, |r| z[r] / dt)).collect());
                op.push(z[b.root_p_row] / dt);
                oq.push(z[b.root_q_row] / dt);
            }
            duals.eta.push(eta);
            duals.delta.push(delta);
            duals.tau_plus.push(tp);
            duals.tau_minus.push(tm);
            duals.omega_p.push(op);
            duals.omega_q.push(oq);
        }
        duals
    }
}

/// Solved DSO program.
#[derive(Clone, Debug)]
pub struct OpfSolution {
    pub allocation: Vec<Vec<f64>>,
    /// One relaxed branch-flow solution per scenario.
    pub flows: Vec<PowerFlowSolution>,
    pub duals: NetworkDuals,
    pub objective: f64,
    /// Scenario-averaged loss cost `J` at the solution.
    pub loss_cost: f64,
    pub raw: ConicSolution,
}

impl OpfProgram {
    pub fn solve(&self, case: &NetworkCase, pi: &[f64], tol: f64) -> Result<OpfSolution, SolverError> {
        let raw = solve_conic(&self.program, tol)?;
        Ok(self.interpret(case, pi, raw))
    }

    pub fn interpret(&self, case: &NetworkCase, pi: &[f64], raw: ConicSolution) -> OpfSolution {
        let allocation = self
            .allocation
            .iter()
            .map(|vars| vars.iter().map(|&v| raw.x[v]).collect())
            .collect();
        let flows: Vec<PowerFlowSolution> = self
            .blocks
            .iter()
            .map(|per_t| solution_frame(case, per_t.iter().map(|b| b.extract(case, &raw.x)).collect()))
            .collect();
        let loss = flows.iter().map(|f| loss_cost(f, pi, case.delta_t)).sum::<f64>() / self.scenarios as f64;
        OpfSolution {
            allocation,
            duals: NetworkDuals::from_blocks(case, &self.blocks, &raw.z),
            flows,
            objective: raw.objective,
            loss_cost: loss,
            raw,
        }
    }
}

impl OpfSolution {
    /// Worst cone gap over all scenarios.
    pub fn exactness_gap(&self) -> f64 {
        self.flows.iter().map(check_exactness).fold(0.0, f64::max)
    }
}
