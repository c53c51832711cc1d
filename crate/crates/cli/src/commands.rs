//! One function per subcommand. Each returns its files in memory so that
//! nothing is written unless the whole command succeeds.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dkspec::kernel::{
    compare_spectra, empirical_spectrum, measure_kappa, quadrature_spectrum_d2, KernelSpec,
};
use dkspec::mlp::{generalization_bound, rkhs_norm_bound, CertificateConstants, MlpModel};
use dkspec::rls::{learning_curve, Dataset, LearningCurveConfig, NoiseKind};
use dkspec::series::{classify_regime, compose_stack, ratio_sequence_partial, Activation, RegimeKind};
use dkspec::special::median;
use dkspec::spectrum::{
    check_geometric_sandwich, degrees_of_freedom, df_bound_supergeometric, distinct_eigenvalues,
    sorted_spectrum, supergeometric_lambda_max, BoundaryPolicy, DfBoundParams, DEFAULT_TOL,
};
use dkspec::Normalization;
use serde_json::{json, Value};

use crate::config::{
    resolve_stack, DfConfig, Format, LearningCurveSection, MlpBoundConfig, OracleConfig, RatioConfig,
    SandwichConfig, SpectrumConfig,
};
use crate::plot::{Plot, Series};

/// Files produced by a command, plus its summary.
pub struct Output {
    pub files: Vec<(String, Format, String)>,
    pub summary: Value,
}

impl Output {
    fn new(summary: Value) -> Self {
        Self { files: Vec::new(), summary }
    }

    fn add(&mut self, name: impl Into<String>, format: Format, body: String) {
        self.files.push((name.into(), format, body));
    }
}

fn stack_label(stack: &[Activation]) -> String {
    stack.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" → ")
}

fn regime_json(stack: &[Activation], degree: usize) -> Value {
    match compose_stack(stack, degree).and_then(|s| classify_regime(&s, 5)) {
        Ok(r) => serde_json::to_value(r).expect("serializable"),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

pub fn spectrum(cfg: &SpectrumConfig) -> Result<Output> {
    let stack = resolve_stack(&cfg.stack)?;
    let depths: Vec<usize> = if cfg.depths.is_empty() { (1..=stack.len()).collect() } else { cfg.depths.clone() };
    if let Some(&bad) = depths.iter().find(|&&k| k == 0 || k > stack.len()) {
        bail!("depth {bad} outside 1..={} (the stack has {} layers)", stack.len(), stack.len());
    }
    if depths.windows(2).any(|w| w[0] >= w[1]) {
        bail!("depths must be strictly increasing, got {depths:?}");
    }
    if cfg.count == 0 {
        bail!("count must be positive");
    }

    let mut curves = Vec::new();
    let mut per_depth = Vec::new();
    let mut out = Output::new(Value::Null);
    for &depth in &depths {
        let layers = stack[..depth].to_vec();
        let k = KernelSpec::for_spectrum(layers.clone(), cfg.dim, cfg.max_degree)?;
        let table = k.spectrum(cfg.max_degree, cfg.tol, cfg.normalization)?;
        let sorted = sorted_spectrum(&table.distinct_values(), cfg.dim, cfg.count, BoundaryPolicy::Refuse)
            .with_context(|| format!("depth {depth}: raise max_degree or lower count"))?;
        out.add(format!("spectrum_depth{depth}_distinct.csv"), Format::Csv, table.distinct_csv());
        let mut csv = String::from("i,eta_i\n");
        for (i, v) in sorted.iter().enumerate() {
            let _ = writeln!(csv, "{},{:e}", i + 1, v);
        }
        out.add(format!("spectrum_depth{depth}_sorted.csv"), Format::Csv, csv);
        per_depth.push(json!({
            "depth": depth,
            "stack": layers.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
            "regime": regime_json(&layers, dkspec::spectrum::recommended_series_degree(cfg.max_degree)),
            "trace": table.trace,
            "tail_mass": table.tail_mass,
            "eta_1": sorted[0],
            "eta_last": sorted[sorted.len() - 1],
        }));
        curves.push((depth, sorted));
    }

    // deeper stacks should decay more slowly; compared scale-free
    let ordering = if curves.len() > 1 {
        let lo = 10.min(cfg.count);
        let hi = 200.min(cfg.count);
        let mut violations = Vec::new();
        for w in curves.windows(2) {
            let (a, b) = (&w[0].1, &w[1].1);
            for i in lo..=hi {
                if b[i - 1] / b[0] < a[i - 1] / a[0] {
                    violations.push(json!({ "index": i, "shallower": w[0].0, "deeper": w[1].0 }));
                }
            }
        }
        json!({ "indices": [lo, hi], "holds": violations.is_empty(), "violations": violations })
    } else {
        Value::Null
    };

    out.add(
        "spectrum.svg",
        Format::Svg,
        Plot {
            title: format!("Sorted spectrum, d = {}", cfg.dim),
            x_label: "index i".into(),
            y_label: "η_i".into(),
            log_x: false,
            log_y: true,
            series: curves
                .iter()
                .map(|(depth, s)| {
                    Series::solid(
                        format!("depth {depth}"),
                        s.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, (v > 0.0).then_some(v))).collect(),
                    )
                })
                .collect(),
            gaps: Vec::new(),
        }
        .render(),
    );
    out.summary = json!({
        "stack": stack_label(&stack),
        "dim": cfg.dim,
        "normalization": cfg.normalization,
        "depths": per_depth,
        "depth_ordering": ordering,
    });
    Ok(out)
}

pub fn ratio(cfg: &RatioConfig) -> Result<Output> {
    let stack = resolve_stack(&cfg.stack)?;
    if cfg.max_degree < 2 {
        bail!("max_degree must be at least 2");
    }
    let s = compose_stack(&stack, cfg.max_degree)?;
    let ratios = ratio_sequence_partial(&s);
    let mut csv = String::from("m,b_m,ratio\n");
    let _ = writeln!(csv, "0,{:e},", s.coeffs()[0]);
    for (i, r) in ratios.iter().enumerate() {
        let m = i + 1;
        let r = r.map_or(String::new(), |v| format!("{v:e}"));
        let _ = writeln!(csv, "{m},{:e},{r}", s.coeffs()[m]);
    }
    let gaps: Vec<usize> = ratios.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(i, _)| i + 1).collect();

    // m₀: first index from which the curve stays below m^{-δ}
    let references: Vec<Value> = cfg
        .references
        .iter()
        .map(|&delta| {
            let below = |m: usize| ratios[m - 1].is_none_or(|r| r <= (m as f64).powf(-delta));
            let defined = ratios.iter().any(Option::is_some);
            let m0 = (1..=ratios.len()).find(|&m0| (m0..=ratios.len()).all(below));
            json!({ "delta": delta, "m0": if defined { m0 } else { None } })
        })
        .collect();

    let mut out = Output::new(json!({
        "stack": stack_label(&stack),
        "max_degree": cfg.max_degree,
        "regime": regime_json(&stack, cfg.max_degree),
        "gaps": gaps,
        "references": references,
    }));
    out.add("ratio.csv", Format::Csv, csv);
    let mut series = vec![Series::solid(
        "b_m / b_{m-1}",
        ratios.iter().enumerate().map(|(i, r)| ((i + 1) as f64, *r)).collect(),
    )];
    for &delta in &cfg.references {
        series.push(Series::dashed(
            format!("m^(-{})", trim_exponent(delta)),
            (1..=ratios.len()).map(|m| (m as f64, Some((m as f64).powf(-delta)))).collect(),
        ));
    }
    out.add(
        "ratio.svg",
        Format::Svg,
        Plot {
            title: format!("Coefficient ratios: {}", stack_label(&stack)),
            x_label: "m".into(),
            y_label: "b_m / b_{m-1}".into(),
            log_x: false,
            log_y: true,
            series,
            gaps: gaps.iter().map(|&m| m as f64).collect(),
        }
        .render(),
    );
    Ok(out)
}

fn trim_exponent(v: f64) -> String {
    for den in 1..=12 {
        let num = v * den as f64;
        if (num - num.round()).abs() < 1e-9 {
            return if den == 1 { format!("{}", num.round()) } else { format!("{}/{den}", num.round()) };
        }
    }
    format!("{v}")
}

pub fn df(cfg: &DfConfig) -> Result<Output> {
    let stack = resolve_stack(&cfg.stack)?;
    if cfg.lambdas.is_empty() || cfg.lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
        bail!("lambdas must be a nonempty list of positive numbers");
    }
    let k = KernelSpec::for_spectrum(stack.clone(), cfg.dim, cfg.max_degree)?;
    let table = k.spectrum(cfg.max_degree, DEFAULT_TOL, cfg.normalization)?;
    let regime = classify_regime(k.series(), 5)?;

    let mut lambdas = cfg.lambdas.clone();
    lambdas.sort_by(f64::total_cmp);
    let values = lambdas.iter().map(|&l| degrees_of_freedom(&table, l)).collect::<dkspec::Result<Vec<_>>>()?;

    let (bounds, bound_info): (Vec<Option<f64>>, Value) = match regime.kind {
        RegimeKind::Geometric => {
            let alpha = (cfg.dim - 1) as f64;
            let p = DfBoundParams::fit(&table.sorted, alpha)?;
            let b = lambdas
                .iter()
                .map(|&l| if l <= (-1f64).exp() { p.bound(l).ok() } else { None })
                .collect();
            (b, json!({ "kind": "geometric", "c0": p.c0, "gamma": p.gamma, "alpha": p.alpha, "q": p.q }))
        }
        RegimeKind::SuperGeometric => {
            let grid: Vec<f64> = lambdas.iter().copied().filter(|&l| l <= supergeometric_lambda_max()).collect();
            if grid.is_empty() {
                (vec![None; lambdas.len()], json!({ "kind": "super_geometric", "note": "no λ ≤ e^-e in the grid" }))
            } else {
                let rep = df_bound_supergeometric(&table, &regime, &grid)?;
                let b = lambdas
                    .iter()
                    .map(|&l| rep.rows.iter().find(|r| r.lambda == l).map(|r| r.bound))
                    .collect();
                (
                    b,
                    json!({
                        "kind": "super_geometric",
                        "c": rep.c,
                        "lambda_ref": rep.lambda_ref,
                        "max_ratio": rep.max_ratio,
                        "dominates": rep.dominates,
                    }),
                )
            }
        }
        RegimeKind::Other => (vec![None; lambdas.len()], json!({ "kind": "other" })),
    };

    let mut csv = String::from("lambda,df,tail_bound,bound\n");
    for ((l, v), b) in lambdas.iter().zip(&values).zip(&bounds) {
        let b = b.map_or(String::new(), |b| format!("{b:e}"));
        let _ = writeln!(csv, "{l:e},{:e},{:e},{b}", v.value, v.tail_bound);
    }
    let within = values.iter().zip(&bounds).all(|(v, b)| b.is_none_or(|b| v.value <= b));
    let mut out = Output::new(json!({
        "stack": stack_label(&stack),
        "dim": cfg.dim,
        "normalization": cfg.normalization,
        "regime": regime,
        "bound": bound_info,
        "df_within_bound": within,
    }));
    out.add("df.csv", Format::Csv, csv);
    let mut series =
        vec![Series::solid("df(λ)", lambdas.iter().zip(&values).map(|(&l, v)| (l, Some(v.value))).collect())];
    if bounds.iter().any(Option::is_some) {
        series.push(Series::dashed("bound", lambdas.iter().zip(&bounds).map(|(&l, b)| (l, *b)).collect()));
    }
    out.add(
        "df.svg",
        Format::Svg,
        Plot {
            title: format!("Degrees of freedom, d = {}", cfg.dim),
            x_label: "λ".into(),
            y_label: "df(λ)".into(),
            log_x: true,
            log_y: true,
            series,
            gaps: Vec::new(),
        }
        .render(),
    );
    Ok(out)
}

pub fn sandwich(cfg: &SandwichConfig) -> Result<Output> {
    let stack = resolve_stack(&cfg.stack)?;
    let k = KernelSpec::for_spectrum(stack.clone(), cfg.dim, cfg.max_degree)?;
    let regime = classify_regime(k.series(), 5)?;
    let rate = match (cfg.rate, regime.r) {
        (Some(r), _) => r,
        (None, Some(r)) => r,
        (None, None) => bail!(
            "the coefficients of {} are not geometric ({:?}); pass an explicit rate",
            stack_label(&stack),
            regime.kind
        ),
    };
    let lam = distinct_eigenvalues(k.series(), cfg.dim, cfg.max_degree, DEFAULT_TOL)?;
    let rep = check_geometric_sandwich(&lam, rate)?;
    let c = rep.fitted_constants;
    let mut csv = String::from("m,lambda_m,lower,upper\n");
    let mut rows = Vec::new();
    for (m, &v) in lam.iter().enumerate() {
        let lower = c.c2 * (rate / 4.0).powi(m as i32);
        let upper = c.c1 * rate.powi(m as i32);
        let _ = writeln!(csv, "{m},{v:e},{lower:e},{upper:e}");
        rows.push((m as f64, v, lower, upper));
    }
    let mut out = Output::new(json!({
        "stack": stack_label(&stack),
        "dim": cfg.dim,
        "rate_source": if cfg.rate.is_some() { "config" } else { "fitted" },
        "report": rep,
    }));
    out.add("sandwich.csv", Format::Csv, csv);
    out.add(
        "sandwich.svg",
        Format::Svg,
        Plot {
            title: format!("Geometric sandwich, r = {rate:.4}"),
            x_label: "m".into(),
            y_label: "λ_m".into(),
            log_x: false,
            log_y: true,
            series: vec![
                Series::solid("λ_m", rows.iter().map(|r| (r.0, Some(r.1))).collect()),
                Series::dashed("C₁ r^m", rows.iter().map(|r| (r.0, Some(r.3))).collect()),
                Series::dashed("C₂ (r/4)^m", rows.iter().map(|r| (r.0, Some(r.2))).collect()),
            ],
            gaps: Vec::new(),
        }
        .render(),
    );
    Ok(out)
}

pub fn learning(cfg: &LearningCurveSection, seed: u64) -> Result<Output> {
    let stack = resolve_stack(&cfg.stack)?;
    let lc_cfg = LearningCurveConfig {
        stack: stack.clone(),
        d: cfg.dim,
        beta: cfg.beta,
        regime: cfg.regime,
        ell_grid: cfg.ell_grid.clone(),
        replicates: cfg.replicates,
        noise: cfg.noise,
        seed,
        n_test: cfg.n_test,
        mu: cfg.mu,
        target: cfg.target.clone(),
        spectrum_degree: cfg.spectrum_degree,
    };
    let lc = learning_curve(&lc_cfg)?;
    let mut out = Output::new(json!({
        "stack": stack_label(&stack),
        "dim": lc.d,
        "beta": lc.beta,
        "regime": lc.regime,
        "rate_exponent": lc.rate_exponent,
        "inversions": lc.inversions,
        "rows": lc.rows.iter().map(|r| json!({
            "ell": r.ell, "lambda": r.lambda, "risk_median": r.risk_median,
            "risk_iqr": r.risk_iqr, "escalations": r.escalations,
        })).collect::<Vec<_>>(),
        "target_warning": lc.target.budget_warning,
    }));
    out.add("learning_curve.csv", Format::Csv, lc.to_csv());
    out.add(
        "learning_curve.svg",
        Format::Svg,
        Plot {
            title: format!("Excess risk, β = {}, d = {}", lc.beta, lc.d),
            x_label: "ℓ".into(),
            y_label: "median excess risk".into(),
            log_x: true,
            log_y: true,
            series: vec![Series::solid(
                "median",
                lc.rows.iter().map(|r| (r.ell as f64, Some(r.risk_median))).collect(),
            )],
            gaps: Vec::new(),
        }
        .render(),
    );
    Ok(out)
}

pub fn oracle(cfg: &OracleConfig, seed: u64) -> Result<Output> {
    let stack = resolve_stack(&cfg.stack)?;
    // κ is a global convention constant: measure it once on the circle
    let reference = KernelSpec::for_spectrum(vec![Activation::Exp], 2, 30)?;
    let kappa = measure_kappa(
        &quadrature_spectrum_d2(&reference, 0)?,
        &distinct_eigenvalues(reference.series(), 2, 0, DEFAULT_TOL)?,
    )?;
    let k = KernelSpec::for_spectrum(stack.clone(), cfg.dim, cfg.max_degree)?;
    let mut csv = String::from("index,reference,analytic_scaled,rel_err\n");
    let summary = if cfg.dim == 2 {
        let quad = quadrature_spectrum_d2(&k, cfg.max_degree)?;
        let formula = distinct_eigenvalues(k.series(), 2, cfg.max_degree, DEFAULT_TOL)?;
        let c = compare_spectra(&quad, &formula, kappa)?;
        for (m, ((q, f), e)) in quad.iter().zip(&formula).zip(&c.per_index_errors).enumerate() {
            let _ = writeln!(csv, "{m},{q:e},{:e},{e:e}", f * kappa);
        }
        json!({
            "method": "circle quadrature",
            "kappa": kappa,
            "max_rel_err": c.max_rel_err,
            "degrees": cfg.max_degree,
        })
    } else {
        if cfg.top == 0 || cfg.replicates == 0 {
            bail!("top and replicates must be positive");
        }
        let table = k.spectrum(cfg.max_degree, DEFAULT_TOL, Normalization::Formula)?;
        let analytic = sorted_spectrum(&table.distinct_values(), cfg.dim, cfg.top, BoundaryPolicy::Refuse)?;
        let mut reps = Vec::new();
        for r in 0..cfg.replicates as u64 {
            let emp = empirical_spectrum(&k, cfg.samples, seed.wrapping_add(r), cfg.top)?;
            let c = compare_spectra(&emp, &analytic, kappa)?;
            reps.push((emp, c.per_index_errors));
        }
        let medians: Vec<f64> =
            (0..cfg.top).map(|i| median(&reps.iter().map(|r| r.1[i]).collect::<Vec<_>>())).collect();
        for i in 0..cfg.top {
            let emp = median(&reps.iter().map(|r| r.0[i]).collect::<Vec<_>>());
            let _ = writeln!(csv, "{},{emp:e},{:e},{:e}", i + 1, analytic[i] * kappa, medians[i]);
        }
        json!({
            "method": "Monte-Carlo Gram spectrum",
            "kappa": kappa,
            "samples": cfg.samples,
            "replicates": cfg.replicates,
            "max_median_rel_err": medians.iter().copied().fold(0.0, f64::max),
        })
    };
    let mut out = Output::new(json!({ "stack": stack_label(&stack), "dim": cfg.dim, "result": summary }));
    out.add("oracle.csv", Format::Csv, csv);
    Ok(out)
}

fn read_dataset(path: &Path, d: usize) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading data {}", path.display()))?;
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.chars().any(|c| c.is_ascii_alphabetic() && c != 'e' && c != 'E')) {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{}:{}: not a number", path.display(), lineno + 1))?;
        if vals.len() != d + 1 {
            bail!("{}:{}: expected {} columns, found {}", path.display(), lineno + 1, d + 1, vals.len());
        }
        outputs.push(vals[d]);
        inputs.push(vals[..d].to_vec());
    }
    if inputs.is_empty() {
        bail!("{} holds no data rows", path.display());
    }
    Ok(Dataset { inputs, outputs, noise: NoiseKind::Bounded { m: 0.0 }, seed: 0 })
}

pub fn mlp_bound(cfg: &MlpBoundConfig) -> Result<Output> {
    if cfg.weights.is_empty() {
        bail!("mlp-bound needs a weight file (--weights or mlp_bound.weights)");
    }
    let model = MlpModel::from_json_file(Path::new(&cfg.weights))?;
    let bound = rkhs_norm_bound(&model)?;
    let certificate = if cfg.data.is_empty() {
        None
    } else {
        let data = read_dataset(Path::new(&cfg.data), model.d)?;
        let k = KernelSpec::new(model.activations.clone(), model.d, 2)?;
        let consts = CertificateConstants { g: cfg.g, b: cfg.b, m: cfg.m, gamma: cfg.gamma };
        Some(generalization_bound(&model, &data, &k, cfg.delta, &consts)?)
    };
    let mut csv = String::from("layer,spectral_norm\n");
    for (i, s) in bound.spectral_norms.iter().enumerate() {
        let _ = writeln!(csv, "{},{s:e}", i + 1);
    }
    let mut out = Output::new(json!({
        "d": model.d,
        "activations": model.activations.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
        "rkhs_norm_sq_bound": bound.value,
        "spectral_norms": bound.spectral_norms,
        "certificate": certificate,
        "gamma_note": certificate.as_ref().map(|_| "γ is a free scale parameter of the bound; supplied, not derived"),
    }));
    out.add("spectral_norms.csv", Format::Csv, csv);
    Ok(out)
}
