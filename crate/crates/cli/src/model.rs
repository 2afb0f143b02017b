//! `plan`, `scale` and `design`: everything driven by a law plus hardware.

use serde::{Deserialize, Serialize};
use sgdtime::hwmodel::{CommKind, CvConfig, HardwareParams};
use sgdtime::lawfit::LawParams;
use sgdtime::planner::{design_balance, scaling_curves, CostModel, DesignOption, Method, ScalingConfig};

use crate::error::{CliError, CliResult};
use crate::files::{read_csv, read_json, Outputs};
use crate::overrides::Overrides;
use crate::{check_increasing, Cli, DesignArgs, ModelArgs, PlanArgs};

/// Hardware used when no `--hw` file is given: `gamma = 1e-4` s/sample,
/// knee at 32 samples, 10 ms all-reduce.
pub const DEFAULT_HARDWARE: HardwareParams<f64> =
    HardwareParams { gamma: 1e-4, m_t: 32, delta: 0.01, comm_kind: CommKind::AllreduceConstant };

const OPTIONS_HEADER: [&str; 5] = ["gamma", "P", "cost_compute", "delta", "cost_bandwidth"];

/// Law from `--law` (if any) with `n_inf`, `alpha`, `epsilon` overrides on
/// top. Without a file both `n_inf` and `alpha` must be set.
fn load_law(args: &ModelArgs, o: &mut Overrides) -> CliResult<LawParams<f64>> {
    let mut law = match &args.law {
        Some(path) => read_json::<LawParams<f64>>(path)?,
        None => {
            if !(o.contains("n_inf") && o.contains("alpha")) {
                return Err(CliError::input(
                    "missing required input: --law <law.json> or --set n_inf=.. --set alpha=..",
                ));
            }
            LawParams::new(0.0, 0.0, 0.0)
        }
    };
    let n_inf = o.take("n_inf")?;
    let alpha = o.take("alpha")?;
    let epsilon = o.take("epsilon")?;
    if n_inf.is_some() || alpha.is_some() || epsilon.is_some() {
        law = LawParams::new(n_inf.unwrap_or(law.n_inf), alpha.unwrap_or(law.alpha), epsilon.unwrap_or(law.epsilon));
    }
    Ok(law)
}

fn load_hw(args: &ModelArgs, o: &mut Overrides) -> CliResult<HardwareParams<f64>> {
    let mut hw = match &args.hw {
        Some(path) => read_json::<HardwareParams<f64>>(path)?,
        None => DEFAULT_HARDWARE,
    };
    hw.gamma = o.take_or("gamma", hw.gamma)?;
    hw.m_t = o.take_or("m_t", hw.m_t)?;
    hw.delta = o.take_or("delta", hw.delta)?;
    if let Some(kind) = o.take::<String>("comm_kind")? {
        hw.comm_kind = kind.parse()?;
    }
    hw.validate()?;
    Ok(hw)
}

/// Optional CV pass; all three keys or none.
fn load_cv(o: &mut Overrides) -> CliResult<Option<CvConfig<f64>>> {
    let updates_per_cv = o.take::<u64>("updates_per_cv")?;
    let m_cv = o.take::<u64>("m_cv")?;
    let gamma_cv = o.take::<f64>("gamma_cv")?;
    match (updates_per_cv, m_cv, gamma_cv) {
        (None, None, None) => Ok(None),
        (Some(updates_per_cv), Some(m_cv), Some(gamma_cv)) => Ok(Some(CvConfig { updates_per_cv, m_cv, gamma_cv })),
        _ => Err(CliError::input("CV needs all of updates_per_cv, m_cv and gamma_cv")),
    }
}

#[derive(Serialize)]
struct PlanRow {
    #[serde(rename = "P")]
    p: u64,
    m_opt: f64,
    t_conv_seconds: f64,
    regime: String,
}

pub(crate) fn plan(args: &PlanArgs, cli: &Cli, mut o: Overrides) -> CliResult<String> {
    check_increasing("--P", &args.p)?;
    let law = load_law(&args.model, &mut o)?;
    let hw = load_hw(&args.model, &mut o)?;
    let cv = load_cv(&mut o)?;
    o.finish("plan")?;

    let mut model = CostModel::new(&law, &hw);
    if let Some(cv) = &cv {
        model = model.with_cv(cv);
    }
    let plans = args.p.iter().map(|&p| model.t_conv_optimal(p)).collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<PlanRow> = plans
        .iter()
        .map(|pl| PlanRow { p: pl.p, m_opt: pl.m_opt, t_conv_seconds: pl.t_conv, regime: pl.regime.to_string() })
        .collect();

    // integer batch sizes on either side of the best real-valued optimum
    let best = plans.iter().min_by(|a, b| a.t_conv.total_cmp(&b.t_conv)).expect("nonempty P list");
    let lo = best.m_opt.floor().max(1.0);
    let hi = best.m_opt.ceil().max(1.0);
    let mut neighbours = vec![(lo, model.t_conv(lo, best.p)?)];
    if hi != lo {
        neighbours.push((hi, model.t_conv(hi, best.p)?));
    }
    let neighbours: Vec<String> = neighbours.iter().map(|(m, t)| format!("M={m} t_conv={t:.6}s")).collect();

    // only the parameter server lacks a closed form
    let numeric = plans.iter().filter(|pl| pl.method == Method::GoldenSection).count();
    let method_note =
        if numeric > 0 { format!("; {numeric} row(s) minimized by golden-section search") } else { String::new() };

    let mut out = Outputs::default();
    out.add_csv("plan.csv", &rows)?;
    let written = out.write_all(&cli.out)?;
    Ok(format!(
        "plan: best P={} m_opt={:.3} t_conv={:.6}s ({}); integer M: {}{method_note} -> {}",
        best.p,
        best.m_opt,
        best.t_conv,
        best.regime,
        neighbours.join(", "),
        written[0].display()
    ))
}

pub(crate) fn scale(args: &PlanArgs, cli: &Cli, mut o: Overrides) -> CliResult<String> {
    check_increasing("--P", &args.p)?;
    let law = load_law(&args.model, &mut o)?;
    let hw = load_hw(&args.model, &mut o)?;
    let cfg =
        ScalingConfig { m_strong: o.take_or("m_strong", 1024)?, m_per_learner: o.take_or("m_per_learner", hw.m_t)? };
    o.finish("scale")?;

    let rows = scaling_curves(&args.p, &law, &hw, cfg)?;
    let mut out = Outputs::default();
    out.add_csv("scaling.csv", &rows.iter().map(ScaleRow::from).collect::<Vec<_>>())?;
    let written = out.write_all(&cli.out)?;
    let last = rows.last().expect("nonempty P list");
    Ok(format!(
        "scale: {} learner counts, at P={} strong={:.6}s weak={:.6}s optimal={:.6}s -> {}",
        rows.len(),
        last.p,
        last.t_strong,
        last.t_weak,
        last.t_optimal,
        written[0].display()
    ))
}

#[derive(Serialize)]
struct ScaleRow {
    #[serde(rename = "P")]
    p: u64,
    t_strong: f64,
    t_weak: f64,
    t_optimal: f64,
}

impl From<&sgdtime::planner::ScalingRow<f64>> for ScaleRow {
    fn from(r: &sgdtime::planner::ScalingRow<f64>) -> Self {
        ScaleRow { p: r.p, t_strong: r.t_strong, t_weak: r.t_weak, t_optimal: r.t_optimal }
    }
}

#[derive(Debug, Deserialize)]
struct OptionRow {
    gamma: f64,
    #[serde(rename = "P")]
    p: u64,
    cost_compute: f64,
    delta: f64,
    cost_bandwidth: f64,
}

pub(crate) fn design(args: &DesignArgs, cli: &Cli, mut o: Overrides) -> CliResult<String> {
    let path =
        args.options.as_ref().ok_or_else(|| CliError::input("missing required input: --options <catalogue.csv>"))?;
    let budget = args.budget.ok_or_else(|| CliError::input("missing required input: --budget"))?;
    let law = load_law(&args.model, &mut o)?;
    let hw = load_hw(&args.model, &mut o)?;
    o.finish("design")?;

    let options: Vec<DesignOption<f64>> = read_csv::<OptionRow>(path, &OPTIONS_HEADER)?
        .into_iter()
        .map(|(_, r)| DesignOption {
            gamma: r.gamma,
            cost_compute: r.cost_compute,
            delta: r.delta,
            cost_bandwidth: r.cost_bandwidth,
            p: r.p,
        })
        .collect();
    if options.is_empty() {
        return Err(CliError::input(format!("{}: no design options", path.display())));
    }
    let result = design_balance(&options, budget, &law, &hw)?;
    let mut out = Outputs::default();
    out.add_json("design.json", &result)?;
    let written = out.write_all(&cli.out)?;
    let w = &result.option;
    Ok(format!(
        "design: option {} of {} (gamma={} delta={} P={} cost={}) t_conv={:.4}s m_opt={:.3}; {} feasible -> {}",
        result.best + 1,
        options.len(),
        w.gamma,
        w.delta,
        w.p,
        w.cost(),
        result.plan.t_conv,
        result.plan.m_opt,
        result.feasible.len(),
        written[0].display()
    ))
}
