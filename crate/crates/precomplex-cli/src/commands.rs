//! One function per subcommand. Each returns its checks and a JSON results block.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use precomplex::discrete_geometry::{
    assemble, build_domain, export_operators, greens_residual, smooth_field, DiscreteOperator, DomainSpec, Layout,
};
use precomplex::fiber_algebra::identities::{check_projector_formulas, check_relations, random_metric, RelationCheck};
use precomplex::fiber_algebra::MAX_DIM;
use precomplex::precomplex_engine::{
    build_chain, correct_chain, formal_adjoint, harmonic_space, mass_inner, solve_bvp, BvpData, BvpOptions, ChainKind,
    ChainOptions, CorrectedChain, Dimension, EngineError,
};
use precomplex::symbol_check::{
    bianchi_dirac_system, chain_symbol_defect, hessian_system, od_ellipticity_report, ChainKind as SymbolChain,
    ReportOptions, SystemSpec, Verdict,
};
use precomplex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{RunConfig, SystemName};
use crate::error::CliError;
use crate::fields::{read_field, write_field, FieldDescriptor};
use crate::report::{fmt_opt, order, write_csv, Check, Clock};

pub type Outcome = Result<(Vec<Check>, Value), CliError>;

fn no_sweep(cfg: &RunConfig, command: &str) -> Result<(), CliError> {
    if cfg.raw.sweep.is_some() {
        return Err(CliError::Config { key: "sweep".into(), message: format!("not supported by {command}") });
    }
    Ok(())
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

/// Worst error per relation name over all bidegrees of a batch.
fn summarize(label: &str, d: usize, checks: &[RelationCheck]) -> Vec<Check> {
    let mut worst: BTreeMap<&str, (f64, f64, bool)> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for c in checks {
        let e = worst.entry(&c.relation).or_insert_with(|| {
            order.push(&c.relation);
            (0.0, c.tolerance, true)
        });
        e.0 = e.0.max(c.max_error);
        e.2 &= c.pass;
    }
    order
        .into_iter()
        .map(|name| {
            let (err, tol, pass) = worst[name];
            Check { pass, ..Check::at_most(format!("d={d} {label}: {name}"), err, tol) }
        })
        .collect()
}

pub fn algebra_check(cfg: &RunConfig, clock: &mut Clock) -> Outcome {
    no_sweep(cfg, "algebra-check")?;
    let dims: Vec<usize> = match cfg.raw.d {
        Some(d) if (1..=MAX_DIM).contains(&d) => vec![d],
        Some(d) => return Err(CliError::Config { key: "d".into(), message: format!("must be in 1..={MAX_DIM}, got {d}") }),
        None => (2..=MAX_DIM).collect(),
    };
    let samples = cfg.raw.samples.unwrap_or(100);
    let tol = cfg.tolerances.get("identity");
    let ptol = cfg.tolerances.get("projector_formula");
    let mut checks = Vec::new();
    let mut results = Vec::new();
    for d in dims {
        let real = check_relations::<f64>(d, samples, cfg.seed, tol, |r| r.random_range(-1.0..1.0));
        let complex = check_relations::<Complex64>(d, samples, cfg.seed.wrapping_add(1), tol, |r| {
            Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
        });
        let proj = check_projector_formulas(d, samples, cfg.seed, ptol);
        checks.extend(summarize("real", d, &real));
        checks.extend(summarize("complex", d, &complex));
        checks.extend(summarize("projector", d, &proj));
        results.push(json!({ "d": d, "real": real, "complex": complex, "projector": proj }));
        clock.stage(format!("d={d}"));
    }
    Ok((checks, json!({ "samples_per_bidegree": samples, "dimensions": results })))
}

fn symbol_chain(kind: ChainKind) -> SymbolChain {
    match kind {
        // the twist is lower order, so the principal symbol is that of de Rham
        ChainKind::DeRham | ChainKind::TwistedDeRham => SymbolChain::DeRham,
        ChainKind::Bianchi { m } => SymbolChain::Bianchi { m },
    }
}

pub fn symbol_check(cfg: &RunConfig, clock: &mut Clock) -> Outcome {
    no_sweep(cfg, "symbol-check")?;
    let d = cfg.d();
    let sym = &cfg.raw.symbol;
    let opts = ReportOptions {
        metric_points: sym.metric_points.unwrap_or(5),
        samples: cfg.raw.samples.unwrap_or(200),
        seed: cfg.seed,
    };
    let tol = cfg.tolerances.get("symbol_singular");
    let mut systems: Vec<SystemSpec> = Vec::new();
    let mut chain = None;
    match sym.system.unwrap_or(SystemName::ChainLevel) {
        SystemName::ChainLevel => {
            let kind = symbol_chain(cfg.chain()?);
            let count = kind.levels(d).len();
            let levels: Vec<usize> = match cfg.raw.level {
                Some(l) if l < count => vec![l],
                Some(l) => {
                    return Err(CliError::Config { key: "level".into(), message: format!("chain has levels 0..{count}, got {l}") })
                }
                None => (0..count).collect(),
            };
            for i in levels {
                systems.push(kind.level_system(d, i)?);
            }
            chain = Some(kind);
        }
        SystemName::BianchiDirac => {
            let op = &cfg.raw.operator;
            let (k, m) = (
                op.k.ok_or_else(|| CliError::Config { key: "operator.k".into(), message: "required".into() })?,
                op.m.ok_or_else(|| CliError::Config { key: "operator.m".into(), message: "required".into() })?,
            );
            let source = precomplex::fiber_algebra::Bidegree::new(d, k, m)
                .map_err(|e| CliError::Config { key: "operator".into(), message: e.to_string() })?;
            systems.push(bianchi_dirac_system(source, sym.dual.unwrap_or(true)));
        }
        SystemName::Hessian => {
            let m = cfg.raw.chain.m.unwrap_or(0);
            systems.push(hessian_system(d, m, sym.boundary.unwrap_or(crate::config::BoundaryName::Normal).into())?);
        }
    }
    let mut checks = Vec::new();
    let mut verdicts = Vec::new();
    for spec in &systems {
        let r = od_ellipticity_report(spec, &opts)?;
        let min_sv = r.interior_min_singular.min(r.boundary_min_singular);
        let pass = r.verdict == Verdict::Elliptic && min_sv > tol;
        checks.push(Check {
            pass,
            detail: Some(format!("{:?}", r.verdict)),
            ..Check::at_least(format!("{}: OD-elliptic", spec.name), min_sv, tol)
        });
        verdicts.push(to_value(&r));
        clock.stage(spec.name.clone());
    }
    let mut results = json!({ "d": d, "verdicts": verdicts });
    if let Some(kind) = chain {
        let ntol = cfg.tolerances.get("symbol_nilpotency");
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut worst: f64 = 0.0;
        for _ in 0..opts.metric_points.max(1) {
            let metric = random_metric(d, &mut rng);
            worst = worst.max(chain_symbol_defect(kind, &metric, opts.samples, rng.random())?);
        }
        checks.push(Check::at_most(format!("{}: symbol products vanish", kind.name()), worst, ntol));
        results["symbol_nilpotency"] = json!(worst);
    }
    Ok((checks, results))
}

fn describe(op: &DiscreteOperator) -> Value {
    json!({
        "name": op.kind.name(),
        "source": op.source,
        "target": op.target,
        "rows": op.nrows(),
        "cols": op.ncols(),
        "nnz": op.matrix.nnz(),
        "order": op.order,
        "green_pairing": op.pairing.is_some(),
    })
}

fn export(dir: Option<&Path>, ops: &[DiscreteOperator]) -> Result<Value, CliError> {
    let Some(dir) = dir else { return Ok(Value::Null) };
    let paths = export_operators(dir, ops)?;
    let names: Vec<String> = paths.iter().filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned())).collect();
    Ok(json!(names))
}

pub fn assemble_cmd(cfg: &RunConfig, clock: &mut Clock) -> Outcome {
    no_sweep(cfg, "assemble")?;
    let spec = cfg.domain()?;
    let dom = build_domain(&spec)?;
    let ops = match cfg.operator()? {
        Some((kind, space)) => vec![assemble(&dom, kind, space)?],
        None => build_chain(&dom, cfg.chain()?)?.operators,
    };
    clock.stage("assemble");
    let exported = export(cfg.raw.output.export_ops.as_deref(), &ops)?;
    let described: Vec<Value> = ops.iter().map(describe).collect();
    let checks = vec![Check::flag("operators assembled", true, format!("{} operator(s)", ops.len()))];
    Ok((checks, json!({ "domain": spec, "operators": described, "exported": exported })))
}

pub fn greens_check(cfg: &RunConfig, clock: &mut Clock) -> Outcome {
    let (kind, space) = cfg
        .operator()?
        .ok_or_else(|| CliError::Config { key: "operator.name".into(), message: "required by greens-check".into() })?;
    let ns = cfg.raw.sweep.clone().unwrap_or_else(|| vec![8, 16, 32]);
    if ns.len() < 2 {
        return Err(CliError::Config { key: "sweep".into(), message: "needs at least two resolutions".into() });
    }
    let spec = cfg.domain()?;
    let r = greens_residual(&spec, kind, space, &ns, cfg.seed)?;
    clock.stage("greens");
    let (lo, hi) = (cfg.tolerances.get("greens_ratio_min"), cfg.tolerances.get("greens_ratio_max"));
    let mut checks = Vec::new();
    for (i, ratio) in r.ratios.iter().enumerate() {
        checks.push(Check {
            name: format!("{} residual ratio n={}->{}", kind.name(), ns[i], ns[i + 1]),
            pass: (lo..=hi).contains(ratio),
            value: Some(*ratio),
            tolerance: None,
            detail: Some(format!("expected in [{lo}, {hi}]")),
        });
    }
    if let Some(path) = &cfg.raw.output.csv {
        let rows: Vec<Vec<String>> = (0..ns.len())
            .map(|i| {
                let prev = i.checked_sub(1);
                vec![
                    ns[i].to_string(),
                    format!("{:.6e}", r.residuals[i]),
                    fmt_opt(prev.map(|p| r.ratios[p])),
                    fmt_opt(prev.and_then(|p| order(r.residuals[p], r.residuals[i], ns[p], ns[i]))),
                ]
            })
            .collect();
        write_csv(path, &["n", "residual", "ratio", "order"], &rows)?;
    }
    Ok((checks, json!({ "domain": spec, "greens": r })))
}

fn chain_options(cfg: &RunConfig) -> ChainOptions {
    ChainOptions { tau: cfg.tolerances.get("rank_tau"), harmonic_gap: cfg.tolerances.get("harmonic_gap") }
}

fn corrected_at(cfg: &RunConfig, n: usize) -> Result<(precomplex::discrete_geometry::Domain, DomainSpec, CorrectedChain), CliError> {
    let spec = DomainSpec { n, ..cfg.domain()? };
    let dom = build_domain(&spec)?;
    let chain = correct_chain(build_chain(&dom, cfg.chain()?)?, chain_options(cfg))?;
    Ok((dom, spec, chain))
}

pub fn correct(cfg: &RunConfig, clock: &mut Clock) -> Outcome {
    let tol = cfg.tolerances.get("nilpotency");
    let ns = cfg.resolutions()?;
    let mut checks = Vec::new();
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    let mut prev: Option<(usize, Vec<f64>)> = None;
    for (i, &n) in ns.iter().enumerate() {
        let (_, spec, chain) = corrected_at(cfg, n)?;
        clock.stage(format!("correct n={n}"));
        for l in &chain.levels {
            if let Some(nil) = l.nilpotency {
                checks.push(Check::at_most(format!("n={n} level {}: corrected nilpotency", l.level), nil, tol));
            }
        }
        let norms: Vec<f64> = chain.levels.iter().map(|l| l.correction_norm).collect();
        for l in &chain.levels {
            let ord = prev.as_ref().and_then(|(pn, pv)| order(pv[l.level], l.correction_norm, *pn, n));
            rows.push(vec![
                n.to_string(),
                l.level.to_string(),
                format!("{:.6e}", l.correction_norm),
                format!("{:.6e}", l.relative_correction),
                fmt_opt(l.nilpotency),
                fmt_opt(l.uncorrected_nilpotency),
                fmt_opt(ord),
            ]);
        }
        prev = Some((n, norms));
        if i + 1 == ns.len() {
            if let Some(dir) = &cfg.raw.output.save_chain {
                chain.save(dir)?;
            }
            let exported = export(cfg.raw.output.export_ops.as_deref(), &chain.spec.operators)?;
            runs.push(json!({
                "domain": spec, "levels": chain.levels, "max_correction_norm": chain.max_correction_norm(),
                "max_nilpotency": chain.max_nilpotency(), "exported": exported,
            }));
        } else {
            runs.push(json!({
                "domain": spec, "levels": chain.levels, "max_correction_norm": chain.max_correction_norm(),
                "max_nilpotency": chain.max_nilpotency(),
            }));
        }
    }
    if let Some(path) = &cfg.raw.output.csv {
        let header = ["n", "level", "correction_norm", "relative_correction", "nilpotency", "uncorrected_nilpotency", "correction_order"];
        write_csv(path, &header, &rows)?;
    }
    Ok((checks, json!({ "chain": cfg.chain()?, "runs": runs })))
}

pub fn cohomology(cfg: &RunConfig, clock: &mut Clock) -> Outcome {
    let ns = cfg.resolutions()?;
    let mut checks = Vec::new();
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for &n in &ns {
        let (_, spec, chain) = corrected_at(cfg, n)?;
        let mut levels = Vec::new();
        let mut dims = Vec::new();
        for k in 0..chain.len() {
            let h = harmonic_space(&chain, k)?;
            checks.push(Check {
                detail: Some(h.dimension.to_string()),
                ..Check::at_least(format!("n={n} level {k}: integer dimension"), h.gap, chain.options.harmonic_gap)
            });
            checks.push(Check::flag(
                format!("n={n} level {k}: kernel routes agree"),
                h.routes_agree(),
                format!("stacked {} / complement {}", h.stacked_dim, h.complement_dim),
            ));
            rows.push(vec![n.to_string(), k.to_string(), h.dimension.to_string(), format!("{:.6e}", h.gap)]);
            dims.push(h.dimension);
            levels.push(json!({
                "level": k, "space": chain.spec.spaces[k], "dimension": h.dimension, "gap": h.gap,
                "stacked_dim": h.stacked_dim, "complement_dim": h.complement_dim, "spectrum_head": h.spectrum_head,
            }));
        }
        if let Some(expect) = &cfg.raw.expect_dims {
            let got: Vec<Option<usize>> = dims.iter().map(Dimension::exact).collect();
            let want: Vec<Option<usize>> = expect.iter().map(|&v| Some(v)).collect();
            let shown: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
            checks.push(Check::flag(
                format!("n={n}: dimensions match expectation"),
                got.len() >= want.len() && got[..want.len()] == want[..],
                format!("got ({}), expected prefix {expect:?}", shown.join(", ")),
            ));
        }
        clock.stage(format!("cohomology n={n}"));
        runs.push(json!({ "domain": spec, "dimensions": dims, "levels": levels }));
    }
    if let Some(path) = &cfg.raw.output.csv {
        write_csv(path, &["n", "level", "dimension", "gap"], &rows)?;
    }
    Ok((checks, json!({ "chain": cfg.chain()?, "runs": runs })))
}

pub fn solve_bvp_cmd(cfg: &RunConfig, clock: &mut Clock) -> Outcome {
    no_sweep(cfg, "solve-bvp")?;
    let k = cfg.raw.level.ok_or_else(|| CliError::Config { key: "level".into(), message: "required by solve-bvp".into() })?;
    let n = cfg.domain()?.n;
    let (dom, spec, chain) = corrected_at(cfg, n)?;
    if k >= chain.len() {
        return Err(CliError::Config { key: "level".into(), message: format!("chain has levels 0..{}, got {k}", chain.len()) });
    }
    clock.stage("correct");
    let kind = chain.spec.kind;
    let descriptor = |level: usize| FieldDescriptor {
        chain: kind,
        level,
        n,
        space: chain.spec.spaces[level],
        length: chain.mass(level).len(),
    };
    let bvp = &cfg.raw.bvp;
    let manufactured = bvp.manufactured.unwrap_or(false);
    let mut exact = None;
    let data = if manufactured {
        let psi = smooth_field(&dom, &Layout::new(&dom, chain.spec.spaces[k])?, cfg.seed);
        let chi = (k < chain.corrected.len()).then(|| &chain.corrected[k] * &psi);
        let xi = if k > 0 { Some(formal_adjoint(&chain, k)? * &psi) } else { None };
        exact = Some(psi.clone());
        BvpData { chi, xi, phi: Some(psi) }
    } else {
        let read = |p: &Option<std::path::PathBuf>, level: Option<usize>, key: &str| -> Result<Option<DVector<f64>>, CliError> {
            match (p, level) {
                (None, _) => Ok(None),
                (Some(_), None) => Err(CliError::Config { key: key.into(), message: format!("level {k} has no such datum") }),
                (Some(p), Some(l)) => read_field(p, &descriptor(l), key).map(Some),
            }
        };
        BvpData {
            chi: read(&bvp.chi, (k + 1 < chain.len()).then_some(k + 1), "bvp.chi")?,
            xi: read(&bvp.xi, k.checked_sub(1), "bvp.xi")?,
            phi: read(&bvp.phi, Some(k), "bvp.phi")?,
        }
    };
    let harmonic_seed = match &bvp.harmonic_seed {
        Some(p) => Some(read_field(p, &descriptor(k), "bvp.harmonic_seed")?),
        None => None,
    };
    let options = BvpOptions { integrability_tol: cfg.tolerances.get("integrability"), harmonic_seed };
    let outcome = solve_bvp(&chain, k, &data, &options);
    clock.stage("solve");
    let mut checks = Vec::new();
    let mut results = json!({ "domain": spec, "chain": kind, "level": k, "space": chain.spec.spaces[k], "manufactured": manufactured });
    match outcome {
        Err(EngineError::Integrability { condition, residual, tolerance }) => {
            checks.push(Check {
                detail: Some(format!("refused: {condition}")),
                ..Check::at_most(format!("integrability condition {}", condition.number()), residual, tolerance)
            });
            results["refused"] = json!({ "condition": condition.number(), "name": condition, "description": condition.describe(), "residual": residual });
        }
        Err(e) => return Err(e.into()),
        Ok(sol) => {
            for (i, (name, v)) in [
                ("chi_in_range", sol.integrability.chi_in_range),
                ("xi_in_adjoint_kernel", sol.integrability.xi_in_adjoint_kernel),
                ("xi_orthogonal_to_harmonic", sol.integrability.xi_orthogonal_to_harmonic),
            ]
            .into_iter()
            .enumerate()
            {
                checks.push(Check { detail: Some(name.into()), ..Check::at_most(format!("integrability condition {}", i + 1), v, options.integrability_tol) });
            }
            if let Some(psi) = &exact {
                let m = chain.mass(k);
                let h = harmonic_space(&chain, k)?;
                let diff = &sol.psi - psi;
                let diff = &diff - h.project(&diff, m);
                let err = mass_inner(&diff, &diff, m).sqrt() / mass_inner(psi, psi, m).sqrt().max(f64::MIN_POSITIVE);
                checks.push(Check::at_most("manufactured recovery modulo harmonic part", err, cfg.tolerances.get("recovery")));
                results["recovery_error"] = json!(err);
            }
            if let Some(path) = &bvp.solution {
                write_field(path, descriptor(k), &sol.psi)?;
            }
            results["integrability"] = to_value(&sol.integrability);
            results["residuals"] = to_value(&sol.residuals);
            results["harmonic_norm"] = json!(sol.harmonic_norm);
            results["harmonic_dim"] = json!(sol.harmonic_dim);
            results["stacked_rank"] = json!(sol.stacked_rank);
        }
    }
    Ok((checks, results))
}
