use serde::Serialize;
use sgdtime::theory::{
    bound_params_from_primitives, gd_limit, n_update_lower_bound_exact, n_update_lower_bound_taylor,
    residual_bound_or_gd, BoundParams,
};
use sgdtime::Error;

use crate::error::CliResult;
use crate::files::Outputs;
use crate::overrides::Overrides;
use crate::{check_increasing, BoundArgs, Cli};

const PRIMITIVE_KEYS: [&str; 4] = ["eta", "curvature", "phi", "dist0"];

#[derive(Serialize)]
struct BoundRow {
    k: u64,
    residual_bound: f64,
    gd_limit: f64,
}

#[derive(Serialize)]
struct NBoundRow {
    #[serde(rename = "M")]
    m: usize,
    n_lower_exact: f64,
    n_lower_taylor: f64,
}

/// Bound parameters either directly (`lambda`, `sigma`, `delta0`, `theta`)
/// or from SGD primitives (`eta`, `curvature`, `phi`, `dist0`, `delta0`).
fn load_params(o: &mut Overrides) -> CliResult<BoundParams<f64>> {
    let delta0 = o.take_or("delta0", 1.0)?;
    if PRIMITIVE_KEYS.iter().any(|k| o.contains(k)) {
        let eta = o.take_or("eta", 0.1)?;
        let curvature = o.take_or("curvature", 1.0)?;
        let phi = o.take_or("phi", 0.1)?;
        let dist0 = o.take_or("dist0", 1.0)?;
        return Ok(bound_params_from_primitives(eta, curvature, phi, delta0, dist0)?);
    }
    let lambda = o.take_or("lambda", 0.1)?;
    let sigma: f64 = o.take_or("sigma", 0.01)?;
    let theta = o.take_or("theta", sigma * sigma)?;
    Ok(BoundParams::new(lambda, sigma, delta0, theta)?)
}

pub(crate) fn run(args: &BoundArgs, cli: &Cli, mut o: Overrides) -> CliResult<String> {
    check_increasing("--M", &args.m)?;
    let bp = load_params(&mut o)?;
    let k_max: u64 = o.take_or("k_max", 1000)?;
    o.finish("bound")?;

    let rows = (0..=k_max)
        .map(|k| {
            Ok(BoundRow {
                k,
                residual_bound: residual_bound_or_gd(k, &bp)?,
                gd_limit: gd_limit(k, bp.lambda, bp.delta0),
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;

    let mut unreachable = 0;
    let mut nrows = Vec::new();
    for &m in &args.m {
        let mf = m as f64;
        // a target at or below the noise floor needs unboundedly many updates
        let exact = match n_update_lower_bound_exact(args.eps, &bp.at_minibatch(mf)) {
            Ok(n) => n,
            Err(Error::UnreachableTarget { .. }) => {
                unreachable += 1;
                f64::INFINITY
            }
            Err(e) => return Err(e.into()),
        };
        let taylor = n_update_lower_bound_taylor(args.eps, bp.lambda, bp.delta0, bp.theta, mf)?.value;
        nrows.push(NBoundRow { m, n_lower_exact: exact, n_lower_taylor: taylor });
    }

    let mut out = Outputs::default();
    out.add_csv("bound.csv", &rows)?;
    out.add_csv("nbound.csv", &nrows)?;
    let written = out.write_all(&cli.out)?;
    let last = rows.last().expect("k starts at 0");
    let mut summary = format!(
        "bound: lambda={} sigma={} delta0={}; at k={} residual_bound={:.6} gd_limit={:.6}",
        bp.lambda, bp.sigma, bp.delta0, last.k, last.residual_bound, last.gd_limit
    );
    if unreachable > 0 {
        summary.push_str(&format!("; epsilon={} unreachable for {unreachable} batch size(s)", args.eps));
    }
    Ok(format!("{summary} -> {}, {}", written[0].display(), written[1].display()))
}
