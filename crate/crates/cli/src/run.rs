//! Subcommand bodies. Each writes its tables under the output directory and
//! returns the names of the checks that failed.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use brl_core::bayes::{bayes_optimal_loss, evaluate, loss, regret, root_loss, solve_exact, RegConfig};
use brl_core::bounds::{self, BoundInputs, StabilityKind};
use brl_core::envgen::{lower_bound_experiment, LowerBoundParams};
use brl_core::mirror::{check_fundamental, check_quadratic_growth, check_rate, max_loss_increase, ScheduleKind};
use brl_core::rng;
use brl_core::stability::{erm_policy, generalization_experiment, StabilityLab, SweepConfig};
use brl_core::{visitation, BeliefMdp, HistorySpace, Policy, Prior, StepSchedule};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::emit::{emit, Table, Value};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Erm,
    Stability,
    Sweep,
    Lowerbound,
    Convergence,
    Bounds,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Erm => "erm",
            Command::Stability => "stability",
            Command::Sweep => "sweep",
            Command::Lowerbound => "lowerbound",
            Command::Convergence => "convergence",
            Command::Bounds => "bounds",
        }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Names of failed checks; empty when everything held.
    pub failed: Vec<String>,
}

impl Outcome {
    pub fn into_result(self) -> CliResult<Self> {
        if self.failed.is_empty() {
            Ok(self)
        } else {
            Err(CliError::Check(self.failed))
        }
    }
}

struct Writer<'a> {
    cfg: &'a RunConfig,
    dir: &'a Path,
    out: Outcome,
    summary: Table,
}

impl<'a> Writer<'a> {
    fn new(cmd: Command, cfg: &'a RunConfig, dir: &'a Path) -> Self {
        let mut summary = Table::new("summary", &["key", "value"]);
        summary.push(vec!["command".into(), cmd.name().into()]);
        summary.push(vec!["seed".into(), cfg.seed.into()]);
        Self { cfg, dir, out: Outcome::default(), summary }
    }

    fn note(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.push(vec![key.into(), value.into()]);
    }

    fn table(&mut self, t: &Table) -> CliResult<()> {
        let files = emit(t, self.cfg.format, self.dir)?;
        self.out.files.extend(files);
        Ok(())
    }

    fn check(&mut self, name: impl Into<String>, ok: bool) {
        let name = name.into();
        self.note(&format!("check:{name}"), if ok { "pass" } else { "fail" });
        if !ok {
            self.out.failed.push(name);
        }
    }

    fn finish(mut self) -> CliResult<Outcome> {
        let summary = std::mem::replace(&mut self.summary, Table::new("summary", &["key", "value"]));
        self.table(&summary)?;
        Ok(self.out)
    }
}

/// Runs one subcommand on the current rayon pool.
pub fn run(cmd: Command, cfg: &RunConfig, dir: &Path) -> CliResult<Outcome> {
    cfg.validate()?;
    let mut w = Writer::new(cmd, cfg, dir);
    match cmd {
        Command::Solve => solve(&mut w)?,
        Command::Erm => erm(&mut w)?,
        Command::Stability => stability(&mut w)?,
        Command::Sweep => sweep(&mut w)?,
        Command::Lowerbound => lowerbound(&mut w)?,
        Command::Convergence => convergence(&mut w)?,
        Command::Bounds => bounds_table(&mut w)?,
    }
    w.finish()
}

fn reg_of(lambda: f64) -> CliResult<RegConfig> {
    Ok(RegConfig::new(lambda)?)
}

fn positive_lambda(cfg: &RunConfig, what: &str) -> CliResult<RegConfig> {
    if cfg.lambda <= 0.0 {
        return Err(CliError::Config(format!("{what} needs lambda > 0")));
    }
    reg_of(cfg.lambda)
}

fn policy_table(space: &HistorySpace, pi: &Policy) -> Table {
    let mut cols = vec!["node", "t", "parent", "action", "cost", "state"];
    let names: Vec<String> = (0..pi.n_actions()).map(|a| format!("p{a}")).collect();
    cols.extend(names.iter().map(|s| s.as_str()));
    let mut t = Table::new("policy", &cols);
    for (i, node) in space.nodes().iter().enumerate() {
        let mut row: Vec<Value> = vec![
            i.into(),
            node.t.into(),
            node.parent.into(),
            node.parent.map(|_| node.action).into(),
            node.parent.map(|_| node.cost).into(),
            node.state.into(),
        ];
        row.extend(pi.row(i).iter().map(|p| Value::from(*p)));
        t.push(row);
    }
    t
}

fn values_table(space: &HistorySpace, values: &[f64], visits: &[f64]) -> Table {
    let mut t = Table::new("values", &["node", "t", "value", "visitation"]);
    for i in 0..space.len() {
        t.push(vec![i.into(), space.node(i).t.into(), values[i].into(), visits[i].into()]);
    }
    t
}

fn dump_histories(w: &mut Writer, space: &HistorySpace, visits: &[f64]) -> CliResult<()> {
    if w.cfg.dump_histories {
        std::fs::create_dir_all(w.dir)?;
        let path = w.dir.join("histories.txt");
        let mut f = BufWriter::new(File::create(&path)?);
        space.dump(&mut f, Some(visits))?;
        w.out.files.push(path);
    }
    Ok(())
}

fn build(cfg: &RunConfig, prior: &Prior) -> CliResult<BeliefMdp> {
    Ok(BeliefMdp::build_capped(prior, cfg.horizon, cfg.max_nodes)?)
}

fn solve(w: &mut Writer) -> CliResult<()> {
    let cfg = w.cfg;
    let prior = cfg.build_prior()?;
    let model = build(cfg, &prior)?;
    let reg = reg_of(cfg.lambda)?;
    let (pi, v) = solve_exact(&model, reg);
    let visits = visitation(&model, &pi);
    w.table(&policy_table(model.space(), &pi))?;
    w.table(&values_table(model.space(), &v, &visits))?;
    dump_histories(w, model.space(), &visits)?;
    w.note("members", prior.len());
    w.note("histories", model.len());
    w.note("lambda", cfg.lambda);
    w.note("loss", root_loss(&model, &v));
    w.note("bayes_optimal_loss", bayes_optimal_loss(&model));
    Ok(())
}

fn distinct_ids(p: &Prior) -> usize {
    p.ids().iter().collect::<std::collections::BTreeSet<_>>().len()
}

fn erm(w: &mut Writer) -> CliResult<()> {
    let cfg = w.cfg;
    let prior = cfg.build_prior()?;
    let reg = reg_of(cfg.lambda)?;
    let sample = prior.sample_empirical(cfg.erm.n, cfg.derived("erm/sample"))?;
    let (model, pi) = erm_policy(&sample, reg, cfg.horizon, cfg.max_nodes)?;
    let truth = build(cfg, &prior)?;
    let on_truth = pi.transfer(model.space(), truth.space());
    let visits = visitation(&model, &pi);
    w.table(&policy_table(model.space(), &pi))?;
    w.table(&values_table(model.space(), &evaluate(&model, &pi, reg), &visits))?;
    dump_histories(w, model.space(), &visits)?;
    let seen = distinct_ids(&sample);
    w.note("n", cfg.erm.n);
    w.note("distinct_sampled", seen);
    w.note("unseen_fraction", 1.0 - seen as f64 / distinct_ids(&prior) as f64);
    w.note("lambda", cfg.lambda);
    w.note("empirical_loss", loss(&model, &pi, reg));
    w.note("population_loss", loss(&truth, &on_truth, RegConfig::none()));
    w.note("bayes_optimal_loss", bayes_optimal_loss(&truth));
    w.note("regret", regret(&truth, &on_truth));
    Ok(())
}

fn stability(w: &mut Writer) -> CliResult<()> {
    let cfg = w.cfg;
    let reg = positive_lambda(cfg, "stability")?;
    let prior = cfg.build_prior()?;
    let sample = prior.sample_empirical(cfg.stability.n, cfg.derived("stability/sample"))?;
    let eval = cfg.stability.eval_population.then_some(&prior);
    let lab = StabilityLab::with_eval(&sample, reg, cfg.horizon, eval, cfg.max_nodes)?;
    let reports: Vec<_> = (0..sample.len()).into_par_iter().map(|j| lab.check(j)).collect::<Result<_, _>>()?;
    let mut t = Table::new(
        "stability",
        &[
            "j", "member_id", "delta", "lower_qg", "upper_lip", "sandwich", "max_gap", "gap_bound", "gap_ok",
            "policy_distance", "distance_bound", "distance_ok", "member_gap", "member_bound", "member_ok", "d_emp",
            "d_cap",
        ],
    );
    for r in &reports {
        t.push(vec![
            r.j.into(),
            sample.ids()[r.j].into(),
            r.delta.into(),
            r.lower_qg.into(),
            r.upper_lip.into(),
            r.sandwich_holds().into(),
            r.max_gap().into(),
            r.gap_bound.into(),
            r.gap_bound_holds().into(),
            r.policy_distance.into(),
            r.distance_bound.into(),
            r.distance_bound_holds().into(),
            r.member_gap.into(),
            r.member_bound.into(),
            r.member_bound_holds().into(),
            r.d_est.d.into(),
            r.d_est.cap.into(),
        ]);
    }
    w.table(&t)?;
    w.note("n", sample.len());
    w.note("lambda", cfg.lambda);
    w.note("histories", lab.model().len());
    w.check("sandwich", reports.iter().all(|r| r.sandwich_holds()));
    w.check("gap_bound", reports.iter().all(|r| r.gap_bound_holds()));
    w.check("distance_bound", reports.iter().all(|r| r.distance_bound_holds()));
    w.check("member_bound", reports.iter().all(|r| r.member_bound_holds()));
    Ok(())
}

fn sweep(w: &mut Writer) -> CliResult<()> {
    let cfg = w.cfg;
    let s = &cfg.sweep;
    let prior = cfg.build_prior()?;
    let sc = SweepConfig {
        horizon: cfg.horizon,
        n_list: s.n_list.clone(),
        lambda_list: s.lambdas.clone(),
        seeds: cfg.cell_seeds("sweep", s.n_seeds),
        delta_conf: s.delta_conf,
        max_nodes: cfg.max_nodes,
    };
    let rows = generalization_experiment(&prior, &sc)?;
    let mut t = Table::new(
        "sweep",
        &[
            "n", "lambda", "seed", "regret", "unseen_fraction", "history_count", "naive", "visitation_bound", "finite_family_bound", "d_emp",
            "max_gap", "sandwich_pass", "gap_bound_pass",
        ],
    );
    for r in &rows {
        t.push(vec![
            r.n.into(),
            r.lambda.into(),
            r.seed.into(),
            r.regret.into(),
            r.unseen_fraction.into(),
            r.history_count.into(),
            r.naive.into(),
            r.visitation_bound.into(),
            r.finite_family_bound.into(),
            r.d_emp.into(),
            r.max_gap.into(),
            r.sandwich_pass.into(),
            r.gap_bound_pass.into(),
        ]);
    }
    w.table(&t)?;
    let mut means = Table::new("sweep_means", &["n", "lambda", "mean_regret", "mean_unseen_fraction", "naive", "finite_family_bound"]);
    for &n in &s.n_list {
        for &lambda in &s.lambdas {
            let cell: Vec<_> = rows.iter().filter(|r| r.n == n && r.lambda == lambda).collect();
            let k = cell.len() as f64;
            means.push(vec![
                n.into(),
                lambda.into(),
                (cell.iter().map(|r| r.regret).sum::<f64>() / k).into(),
                (cell.iter().map(|r| r.unseen_fraction).sum::<f64>() / k).into(),
                cell[0].naive.into(),
                cell[0].finite_family_bound.into(),
            ]);
        }
    }
    w.table(&means)?;
    w.note("rows", rows.len());
    w.check("sandwich", rows.iter().all(|r| r.sandwich_pass != Some(false)));
    w.check("gap_bound", rows.iter().all(|r| r.gap_bound_pass != Some(false)));
    Ok(())
}

fn lowerbound(w: &mut Writer) -> CliResult<()> {
    let cfg = w.cfg;
    let l = &cfg.lowerbound;
    let t_len = l.identifier_length;
    let n = l.n.unwrap_or(1 << t_len);
    let seeds = cfg.cell_seeds("lowerbound", l.n_seeds);
    let runs: Vec<_> = seeds
        .par_iter()
        .map(|&seed| {
            let params = LowerBoundParams::random_labels(t_len, l.eps_prime, rng::derive_seed(seed, "labels"))?;
            lower_bound_experiment(&params, n, seed)
        })
        .collect::<Result<_, _>>()?;
    let mut t = Table::new("lowerbound", &["seed", "n", "unseen_fraction", "regret", "expression", "holds"]);
    for r in &runs {
        t.push(vec![
            r.seed.into(),
            r.n.into(),
            r.unseen_fraction.into(),
            r.regret.into(),
            r.expression.into(),
            r.holds.into(),
        ]);
    }
    w.table(&t)?;
    let holds = runs.iter().filter(|r| r.holds).count();
    let frac = holds as f64 / runs.len() as f64;
    let inputs = BoundInputs {
        d_const: 1.0,
        q_const: 1.0,
        c_max: 1.0,
        horizon: t_len as f64,
        n_actions: 2.0,
        lambda: l.bound_lambda,
        n_samples: n as f64,
        delta_conf: l.delta_conf,
        p_min: 1.0 / (1u64 << t_len) as f64,
        b_loss: t_len as f64,
    };
    let naive = bounds::naive_bound(&inputs, runs[0].history_count as f64);
    let finite_family_bound = bounds::finite_family_bound(&inputs);
    w.note("runs", runs.len());
    w.note("holds", holds);
    w.note("hold_fraction", frac);
    w.note("mean_regret", runs.iter().map(|r| r.regret).sum::<f64>() / runs.len() as f64);
    w.note("mean_unseen_fraction", runs.iter().map(|r| r.unseen_fraction).sum::<f64>() / runs.len() as f64);
    w.note("history_count", runs[0].history_count);
    w.note("naive_bound", naive);
    w.note("finite_family_bound", finite_family_bound);
    w.note("c_max_t", t_len as f64);
    w.note("naive_vacuous", naive > t_len as f64);
    w.check("hold_fraction", frac >= l.min_hold_fraction);
    Ok(())
}

fn convergence(w: &mut Writer) -> CliResult<()> {
    let cfg = w.cfg;
    let c = &cfg.convergence;
    let reg = positive_lambda(cfg, "convergence")?;
    let prior = cfg.build_prior()?;
    let model = build(cfg, &prior)?;
    let schedule = match c.constant_step {
        Some(a) => StepSchedule { kind: ScheduleKind::Constant(a), lambda: cfg.lambda },
        None => StepSchedule::harmonic(cfg.lambda),
    };
    let trace = brl_core::utrpo_run(&model, reg, &schedule, c.iterations, None)?;
    let (opt, v) = solve_exact(&model, reg);
    let exact = root_loss(&model, &v);

    let mut r = rng::stream(cfg.derived("convergence/references"), rng::POLICIES);
    let mut refs: Vec<Policy> = (0..c.references).map(|_| Policy::random(model.space(), &mut r)).collect();
    refs.push(opt.clone());
    let reports: Vec<_> =
        refs.par_iter().map(|p| check_fundamental(&trace, p, &model, reg, Some(c.fundamental_steps))).collect();
    let steps = reports[0].per_k.len();
    let per_k: Vec<f64> =
        (0..steps).map(|k| reports.iter().map(|rep| rep.per_k[k]).fold(f64::INFINITY, f64::min)).collect();
    let min_residual = per_k.iter().cloned().fold(f64::INFINITY, f64::min);

    let rate = if schedule.is_harmonic() { Some(check_rate(&trace, exact, reg, &model)?) } else { None };

    let mut t = Table::new(
        "trace",
        &["k", "alpha", "loss", "gap", "min_fundamental_residual", "rate_ratio", "rate_bound"],
    );
    for k in 0..trace.losses.len() {
        let ratio = rate.as_ref().and_then(|rr| rr.ratios.iter().find(|x| x.0 == k).map(|x| x.1));
        let bound = rate.as_ref().filter(|_| k >= 2).map(|rr| rr.bound_at(k, cfg.lambda));
        t.push(vec![
            k.into(),
            trace.alphas.get(k).copied().into(),
            trace.losses[k].into(),
            (trace.losses[k] - exact).into(),
            per_k.get(k).copied().into(),
            ratio.into(),
            bound.into(),
        ]);
    }
    w.table(&t)?;

    let mut r = rng::stream(cfg.derived("convergence/growth"), rng::POLICIES);
    let mut starts = vec![Policy::uniform(model.space())];
    starts.extend((0..c.growth_starts).map(|_| Policy::random(model.space(), &mut r)));
    let growth: Vec<_> =
        starts.par_iter().map(|p| check_quadratic_growth(p, &model, reg)).collect::<Result<_, _>>()?;
    let mut g = Table::new("growth", &["start", "lhs", "rhs", "pass"]);
    for (i, rep) in growth.iter().enumerate() {
        g.push(vec![i.into(), rep.lhs.into(), rep.rhs.into(), rep.pass.into()]);
    }
    w.table(&g)?;
    w.table(&policy_table(model.space(), trace.policies.last().expect("trace holds pi_0")))?;

    let increase = max_loss_increase(&trace);
    w.note("histories", model.len());
    w.note("lambda", cfg.lambda);
    w.note("iterations", c.iterations);
    w.note("exact_loss", exact);
    w.note("final_loss", *trace.losses.last().expect("trace holds pi_0"));
    w.note("max_loss_increase", if trace.alphas.is_empty() { Value::Missing } else { increase.into() });
    w.note("min_fundamental_residual", if steps == 0 { Value::Missing } else { min_residual.into() });
    w.note("lipschitz", reports[0].lipschitz);
    if let Some(rr) = &rate {
        w.note("rate_max_ratio", rr.max_ratio);
        w.note("rate_constant", rr.constant);
    }
    w.check("monotone_descent", trace.alphas.is_empty() || increase <= 1e-10);
    w.check("fundamental", reports.iter().all(|rep| rep.pass));
    if let Some(rr) = &rate {
        w.check("rate", rr.pass);
    }
    w.check("quadratic_growth", growth.iter().all(|rep| rep.pass));
    Ok(())
}

fn bounds_table(w: &mut Writer) -> CliResult<()> {
    let b = &w.cfg.bounds;
    let inp = b.inputs();
    let sb = bounds::stability_bounds(&inp);
    let mut t = Table::new("bounds", &["name", "value"]);
    let rows: [(&str, f64); 10] = [
        ("naive", bounds::naive_bound(&inp, b.history_count)),
        ("pointwise_stability", bounds::hypothesis_stability_bound(&inp, b.beta, StabilityKind::Pointwise)),
        ("uniform_stability", bounds::hypothesis_stability_bound(&inp, b.beta, StabilityKind::Uniform)),
        ("visitation_bound", sb.visitation_bound),
        ("finite_family_bound", sb.finite_family_bound),
        ("finite_family_rate", sb.finite_family_rate),
        ("kappa", inp.kappa()),
        ("stability_constant", bounds::stability_constant(&inp)),
        ("distance_bound", bounds::distance_bound(&inp)),
        ("finite_member_bound", bounds::finite_member_bound(&inp, inp.p_min)),
    ];
    for (name, v) in rows {
        t.push(vec![name.into(), v.into()]);
    }
    w.table(&t)?;
    Ok(())
}
