//! Subcommand implementations: resolve configuration, compute, render.

use std::io::Write;

use nhfloquet::floquet::{classify_stability, population_trace, Tolerances};
use nhfloquet::lattice::{dispersion, map_to_potential, LatticePotential, PotentialSign};
use nhfloquet::linalg::{det, eigenvalues, trace, ONE, ZERO};
use nhfloquet::model::{
    make_preset, DrivingProfile, Frame, Harmonic, Preset, RationalAlpha, StaticAmplitude, TwoLevelModel,
};
use nhfloquet::output::{
    bands_table, butterfly_table, complex_cells, dispersion_bands_table, dispersion_points_table,
    dispersion_summary_table, phase_diagram_table, Cell, Format, Provenance, Table,
};
use nhfloquet::propagator::{
    intra_period_spectrum, propagate_matrix, propagate_pauli_to, IntegratorSettings, Method,
};
use nhfloquet::scan::{
    butterfly, compare_dispersion, cross_check_butterfly, phase_diagram, ButterflySpec, DispersionSpec, GammaAxis,
    PhaseDiagramSpec,
};
use nhfloquet::selftest::run_selftest;
use nalgebra::Vector3;
use nhfloquet::C64;

use crate::config::{format_complex, missing, parse_complex, parse_real, Range, Resolver, RunConfig};
use crate::{CliError, SelftestArgs};

/// Rendered results of one run.
#[derive(Debug)]
pub struct Emission {
    /// `(file suffix, contents)`; the first entry goes to stdout without `--output`.
    pub outputs: Vec<(&'static str, String)>,
    /// Write every entry to `<output>_<suffix>.<ext>` instead of one file.
    pub prefix_mode: bool,
    pub extension: &'static str,
    pub notes: Vec<String>,
}

impl Emission {
    fn single(text: String, format: Format) -> Self {
        Emission { outputs: vec![("", text)], prefix_mode: false, extension: ext(format), notes: Vec::new() }
    }
}

fn ext(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

pub fn emit(e: &Emission, output: Option<&str>, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    for n in &e.notes {
        let _ = writeln!(err, "{n}");
    }
    let write_file = |path: &str, text: &str| {
        std::fs::write(path, text).map_err(|x| CliError::Io(format!("cannot write {path}: {x}")))
    };
    match output {
        None => out.write_all(e.outputs[0].1.as_bytes()).map_err(|x| CliError::Io(format!("cannot write stdout: {x}"))),
        Some(path) if e.prefix_mode => {
            for (suffix, text) in &e.outputs {
                write_file(&format!("{path}_{suffix}.{}", e.extension), text)?;
            }
            Ok(())
        }
        Some(path) => write_file(path, &e.outputs[0].1),
    }
}

pub fn execute(name: &str, cfg: RunConfig, cross_check: bool) -> Result<Emission, CliError> {
    let mut r = Resolver::new(cfg);
    match name {
        "propagate" => propagate(&mut r),
        "floquet" => floquet(&mut r),
        "dynamics" => dynamics(&mut r),
        "potential" => potential(&mut r),
        "bands" => bands(&mut r),
        "dispersion" => dispersion_cmd(&mut r),
        "phase-diagram" => phase_diagram_cmd(&mut r),
        "butterfly" => butterfly_cmd(&mut r, cross_check),
        other => Err(CliError::Usage(format!("unknown subcommand {other}"))),
    }
}

fn preset(r: &mut Resolver) -> Result<Option<Preset>, CliError> {
    r.opt("preset", |s| s.parse::<Preset>().map_err(|e| CliError::Config(e.to_string())), |p| p.to_string())
}

fn alpha(r: &mut Resolver, preset: Option<Preset>) -> Result<Option<RationalAlpha>, CliError> {
    let a = r.opt(
        "alpha",
        |s| s.parse::<RationalAlpha>().map_err(|e| CliError::Config(e.to_string())),
        |a| a.to_string(),
    )?;
    match preset {
        Some(p) if p.needs_alpha() && a.is_none() => Err(missing("alpha", &format!("required for preset {p}"))),
        Some(p) if !p.needs_alpha() && a.is_some() => {
            Err(CliError::Config(format!("--alpha does not apply to preset {p}")))
        }
        _ => Ok(a),
    }
}

fn require_preset(r: &mut Resolver, command: &str) -> Result<(Preset, Option<RationalAlpha>), CliError> {
    if !r.take_prefixed("cos.").is_empty() || !r.take_prefixed("sin.").is_empty() || r.has("base_period") {
        return Err(CliError::Config(format!("{command} needs a preset; explicit profiles are not supported here")));
    }
    let p = preset(r)?.ok_or_else(|| missing("preset", "choose H1, H1b, H2, H3 or H4"))?;
    let a = alpha(r, Some(p))?;
    Ok((p, a))
}

fn frame(r: &mut Resolver) -> Result<Frame, CliError> {
    let vec3 = |s: &str| -> Result<Vector3<f64>, CliError> {
        let parts: Vec<f64> = s.split(',').map(parse_real).collect::<Result<_, _>>()?;
        match parts.as_slice() {
            [x, y, z] => Ok(Vector3::new(*x, *y, *z)),
            _ => Err(CliError::Config(format!("expected three comma-separated components, got {s:?}"))),
        }
    };
    let show = |v: &Vector3<f64>| format!("{:?},{:?},{:?}", v.x, v.y, v.z);
    let n: Vec<Option<Vector3<f64>>> =
        ["n1", "n2", "n3"].iter().map(|k| r.opt(k, vec3, show)).collect::<Result<_, _>>()?;
    match (n[0], n[1], n[2]) {
        (None, None, None) => Ok(Frame::canonical()),
        (Some(a), Some(b), Some(c)) => Ok(Frame::new(a, b, c)?),
        _ => Err(CliError::Config("a frame needs all of n1, n2, n3".into())),
    }
}

/// Driving profile and frame with a zero static amplitude.
fn drive_model(r: &mut Resolver, mu_key: Option<&str>) -> Result<(TwoLevelModel, Option<Preset>), CliError> {
    let p = preset(r)?;
    let explicit = r.has("base_period") || r.has_prefix("cos.") || r.has_prefix("sin.");
    let model = match (p, explicit) {
        (Some(_), true) => {
            return Err(CliError::Config("conflicting model: a preset and an explicit profile were both given".into()))
        }
        (Some(p), false) => {
            let a = alpha(r, Some(p))?;
            let mu = match mu_key {
                Some(k) => r.real_required(k, "drive strength")?,
                None => 0.0,
            };
            make_preset(p, C64::from(0.0), mu, a)?
        }
        (None, true) => {
            if r.has("mu") || r.has("alpha") {
                return Err(CliError::Config("--mu and --alpha apply to presets only, not explicit profiles".into()));
            }
            let base = r.real_or("base_period", 1.0)?;
            let mut terms: std::collections::BTreeMap<u32, (C64, C64)> = Default::default();
            for (key, raw) in r.take_prefixed("cos.").into_iter().chain(r.take_prefixed("sin.")) {
                let (kind, idx) = key.split_once('.').expect("prefixed key");
                let m: u32 = idx.parse().map_err(|_| CliError::Config(format!("bad harmonic key {key:?}")))?;
                let z = parse_complex(&raw)?;
                let e = terms.entry(m).or_insert((ZERO, ZERO));
                if kind == "cos" {
                    e.0 = z;
                } else {
                    e.1 = z;
                }
                r.record(&key, format_complex(z));
            }
            let harmonics = terms.into_iter().map(|(m, (c, s))| Harmonic::new(m, c, s)).collect();
            let profile = DrivingProfile::new(base, harmonics)?;
            TwoLevelModel::new(StaticAmplitude::real(0.0), profile, Frame::canonical())
        }
        (None, false) => return Err(missing("preset", "or give an explicit profile with cos.<m>/sin.<m> keys")),
    };
    let f = frame(r)?;
    let model = TwoLevelModel::new(model.amplitude(), model.profile().clone(), f);
    Ok((model, p))
}

fn amplitude(r: &mut Resolver) -> Result<StaticAmplitude, CliError> {
    if r.has("gamma") && r.has("gamma_sq") {
        return Err(CliError::Config("give either --gamma or --gamma-sq, not both".into()));
    }
    if let Some(a) = r.opt(
        "gamma",
        |s| StaticAmplitude::from_complex(parse_complex(s)?).map_err(CliError::from),
        |a| format_complex(a.value()),
    )? {
        return Ok(a);
    }
    r.opt("gamma_sq", |s| parse_real(s).map(StaticAmplitude::from_energy), |a| format!("{:?}", a.energy()))?
        .ok_or_else(|| missing("gamma", "static amplitude; or --gamma-sq"))
}

fn integrator(r: &mut Resolver) -> Result<IntegratorSettings, CliError> {
    let d = IntegratorSettings::default();
    let s = IntegratorSettings {
        method: r.parsed_or::<Method>("method", d.method)?,
        rel_tol: r.real_or("rtol", d.rel_tol)?,
        abs_tol: r.real_or("atol", d.abs_tol)?,
        max_step: r.real_or("max_step", d.max_step)?,
        dense_samples: r.usize_or("samples", d.dense_samples)?,
    };
    s.validate()?;
    Ok(s)
}

fn tolerances(r: &mut Resolver) -> Result<Tolerances, CliError> {
    let d = Tolerances::default();
    let t = Tolerances { tol_phase: r.real_or("tol_phase", d.tol_phase)?, tol_edge: r.real_or("tol_edge", d.tol_edge)? };
    if !(t.tol_phase >= 0.0 && t.tol_edge >= 0.0) {
        return Err(CliError::Config("tolerances must be non-negative".into()));
    }
    Ok(t)
}

fn format(r: &mut Resolver, default: Format) -> Result<Format, CliError> {
    r.parsed_or("format", default)
}

fn render(table: &Table, fmt: Format, prov: &Provenance) -> Emission {
    Emission::single(table.render(fmt, prov), fmt)
}

fn single_model(r: &mut Resolver) -> Result<TwoLevelModel, CliError> {
    let (model, _) = drive_model(r, Some("mu"))?;
    let amp = amplitude(r)?;
    Ok(model.with_amplitude(amp))
}

fn propagate(r: &mut Resolver) -> Result<Emission, CliError> {
    let model = single_model(r)?;
    let quantity = r
        .opt(
            "quantity",
            |s| match s {
                "matrix" | "pauli" | "spectrum" => Ok(s.to_string()),
                _ => Err(CliError::Config(format!("unknown quantity {s:?}, expected matrix, pauli or spectrum"))),
            },
            |s| s.clone(),
        )?
        .unwrap_or_else(|| {
            r.record("quantity", "matrix");
            "matrix".into()
        });
    let t_end = if quantity == "spectrum" { model.period() } else { r.real_or("t_end", model.period())? };
    let settings = integrator(r)?;
    let fmt = format(r, Format::Csv)?;
    r.finish()?;

    let table = match quantity.as_str() {
        "matrix" => {
            let traj = propagate_matrix(&model, t_end, &settings)?;
            let mut t = Table::new(vec![
                "t", "u00_re", "u00_im", "u01_re", "u01_im", "u10_re", "u10_im", "u11_re", "u11_im", "det_re", "det_im",
            ]);
            for (time, u) in traj.times.iter().zip(&traj.matrices) {
                let mut row = vec![Cell::Num(*time)];
                for z in [u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)], det(u)] {
                    row.extend(complex_cells(z));
                }
                t.push(row);
            }
            t
        }
        "pauli" => {
            let comps = propagate_pauli_to(&model, t_end, &settings)?;
            let mut t = Table::new(vec!["t", "u0_re", "u0_im", "u1_re", "u1_im", "u2_re", "u2_im", "u3_re", "u3_im"]);
            for (time, u) in comps.times.iter().zip(&comps.components) {
                let mut row = vec![Cell::Num(*time)];
                for z in u {
                    row.extend(complex_cells(*z));
                }
                t.push(row);
            }
            t
        }
        _ => {
            let samples = intra_period_spectrum(&model, &settings)?;
            let mut t = Table::new(vec!["t", "lambda1_re", "lambda1_im", "lambda2_re", "lambda2_im"]);
            for s in samples {
                let mut row = vec![Cell::Num(s.t)];
                row.extend(complex_cells(s.eigenvalues[0]));
                row.extend(complex_cells(s.eigenvalues[1]));
                t.push(row);
            }
            t
        }
    };
    Ok(render(&table, fmt, &r.provenance))
}

fn floquet(r: &mut Resolver) -> Result<Emission, CliError> {
    let model = single_model(r)?;
    let settings = integrator(r)?;
    let tol = tolerances(r)?;
    let fmt = format(r, Format::Json)?;
    r.finish()?;

    let traj = propagate_matrix(&model, model.period(), &settings.endpoint_only())?;
    let u = traj.final_matrix();
    let report = classify_stability(trace(&u) / 2.0, &tol);
    let (l1, l2) = eigenvalues(&u);
    let mut t = Table::new(vec![
        "period", "u0_re", "u0_im", "class", "beta", "im_beta", "lambda1_re", "lambda1_im", "lambda2_re", "lambda2_im",
        "error_estimate",
    ]);
    let mut row = vec![Cell::Num(model.period())];
    row.extend(complex_cells(report.u0));
    row.push(report.class.as_str().into());
    row.push(report.beta.into());
    row.push(report.im_beta.into());
    row.extend(complex_cells(l1));
    row.extend(complex_cells(l2));
    row.push(traj.error_estimate.into());
    t.push(row);
    Ok(render(&t, fmt, &r.provenance))
}

fn dynamics(r: &mut Resolver) -> Result<Emission, CliError> {
    let model = single_model(r)?;
    let periods = r.usize_or("periods", 3)?;
    let initial = r
        .opt(
            "initial",
            |s| match s {
                "up" | "down" => Ok(s.to_string()),
                _ => Err(CliError::Config(format!("initial state must be up or down, got {s:?}"))),
            },
            |s| s.clone(),
        )?
        .unwrap_or_else(|| {
            r.record("initial", "up");
            "up".into()
        });
    let settings = integrator(r)?;
    let fmt = format(r, Format::Csv)?;
    r.finish()?;

    let psi0 = if initial == "up" { [ONE, ZERO] } else { [ZERO, ONE] };
    let trace = population_trace(&model, psi0, periods, &settings)?;
    let mut t = Table::new(vec!["t", "p_up", "p_down", "p_sum", "p_diff"]);
    for (time, p) in trace.times.iter().zip(&trace.populations) {
        t.push(vec![(*time).into(), p[0].into(), p[1].into(), (p[0] + p[1]).into(), (p[0] - p[1]).into()]);
    }
    Ok(render(&t, fmt, &r.provenance))
}

fn sign(r: &mut Resolver) -> Result<PotentialSign, CliError> {
    r.parsed_or("sign", PotentialSign::Plus)
}

fn lattice_potential(r: &mut Resolver) -> Result<LatticePotential, CliError> {
    let (model, _) = drive_model(r, Some("mu"))?;
    let s = sign(r)?;
    Ok(map_to_potential(&model, s))
}

fn potential(r: &mut Resolver) -> Result<Emission, CliError> {
    let pot = lattice_potential(r)?;
    let xs = r.opt("x", Range::parse, Range::canonical)?;
    let fmt = format(r, Format::Csv)?;
    r.finish()?;

    let table = match xs {
        Some(range) => {
            let mut t = Table::new(vec!["x", "re_v", "im_v"]);
            for x in range.values() {
                let mut row = vec![Cell::Num(x)];
                row.extend(complex_cells(pot.eval(x)));
                t.push(row);
            }
            t
        }
        None => {
            let mut t = Table::new(vec!["n", "re", "im"]);
            for (n, c) in pot.coefficients() {
                let mut row = vec![Cell::Int(*n)];
                row.extend(complex_cells(*c));
                t.push(row);
            }
            t
        }
    };
    Ok(render(&table, fmt, &r.provenance))
}

fn bands(r: &mut Resolver) -> Result<Emission, CliError> {
    let pot = lattice_potential(r)?;
    let zone = std::f64::consts::PI / pot.lattice_constant();
    let k = r.range_or("k", &format!("0:{zone:?}:101"))?;
    let n_bands = r.usize_or("n_bands", 5)?;
    let m = r.usize_or("truncation", pot.default_truncation())?;
    let fmt = format(r, Format::Csv)?;
    r.finish()?;
    if n_bands == 0 || n_bands > 2 * m + 1 {
        return Err(CliError::Config(format!("--n-bands must lie in 1..={}", 2 * m + 1)));
    }
    let points = dispersion(&pot, &k.values(), n_bands, m)?;
    Ok(render(&bands_table(&points), fmt, &r.provenance))
}

fn dispersion_cmd(r: &mut Resolver) -> Result<Emission, CliError> {
    let (p, a) = require_preset(r, "dispersion")?;
    let mu = r.real_required("mu", "drive strength")?;
    let gamma_sq = r.range_or("gamma_sq", "-10:40:400")?;
    let k_points = r.usize_or("k_points", 101)?;
    let n_bands = r.usize_or("n_bands", 5)?;
    let default_m = map_to_potential(&make_preset(p, ONE, mu, a)?, PotentialSign::Plus).default_truncation();
    let truncation = r.usize_or("truncation", default_m)?;
    let settings = integrator(r)?;
    let tol = tolerances(r)?;
    let fmt = format(r, Format::Csv)?;
    r.finish()?;

    let spec = DispersionSpec {
        preset: p,
        mu,
        alpha: a,
        gamma_sq: gamma_sq.values(),
        k_points,
        n_bands,
        truncation: Some(truncation),
        settings: settings.endpoint_only(),
        tolerances: tol,
    };
    let cmp = compare_dispersion(&spec)?;
    let prov = &r.provenance;
    Ok(Emission {
        outputs: vec![
            ("summary", dispersion_summary_table(&cmp).render(fmt, prov)),
            ("floquet", dispersion_points_table(&cmp).render(fmt, prov)),
            ("bands", dispersion_bands_table(&cmp).render(fmt, prov)),
        ],
        prefix_mode: true,
        extension: ext(fmt),
        notes: Vec::new(),
    })
}

fn phase_diagram_cmd(r: &mut Resolver) -> Result<Emission, CliError> {
    let (p, a) = require_preset(r, "phase-diagram")?;
    let (g_default, mu_default) = match p {
        Preset::H2 => ("0:3:201", "0:6:201"),
        _ => ("0:4:201", "0:4:201"),
    };
    if r.has("gamma") && r.has("gamma_sq") {
        return Err(CliError::Config("give either --gamma or --gamma-sq, not both".into()));
    }
    let gamma = if r.has("gamma_sq") {
        GammaAxis::GammaSq(r.range_or("gamma_sq", "")?.values())
    } else {
        GammaAxis::Gamma(r.range_or("gamma", g_default)?.values())
    };
    let mu = r.range_or("mu", mu_default)?.values();
    let settings = integrator(r)?;
    let tol = tolerances(r)?;
    let fmt = format(r, Format::Csv)?;
    r.finish()?;

    let spec = PhaseDiagramSpec {
        preset: p,
        alpha: a,
        gamma,
        mu,
        settings: settings.endpoint_only(),
        tolerances: tol,
    };
    let pd = phase_diagram(&spec)?;
    Ok(render(&phase_diagram_table(&pd), fmt, &r.provenance))
}

fn butterfly_cmd(r: &mut Resolver, cross_check: bool) -> Result<Emission, CliError> {
    let p = preset(r)?.ok_or_else(|| missing("preset", "H3 or H4"))?;
    if !p.needs_alpha() {
        return Err(CliError::Config(format!("butterfly needs preset H3 or H4, got {p}")));
    }
    if r.has("alpha") {
        return Err(CliError::Config("butterfly enumerates alpha itself; use --alpha-min/--alpha-max".into()));
    }
    let mu = r.real_or("mu", 2.0)?;
    let gamma_sq = r.range_or("gamma_sq", "-10:40:200")?;
    let q_max = r.usize_or("q_max", 12)?;
    let alpha_min = r.real_or("alpha_min", 0.0)?;
    let alpha_max = r.real_or("alpha_max", 1.0)?;
    let settings = integrator(r)?;
    let tol = tolerances(r)?;
    let fmt = format(r, Format::Csv)?;
    r.finish()?;
    let q_max = u32::try_from(q_max).map_err(|_| CliError::Config("--q-max is too large".into()))?;

    let spec = ButterflySpec {
        preset: p,
        mu,
        q_max,
        gamma_sq: gamma_sq.values(),
        alpha_range: (alpha_min, alpha_max),
        settings: settings.endpoint_only(),
        tolerances: tol,
    };
    let data = butterfly(&spec)?;
    let mut emission = render(&butterfly_table(&data), fmt, &r.provenance);
    if cross_check {
        let report = cross_check_butterfly(p, &data, None, 1e-4)?;
        emission.notes.push(format!(
            "cross-check: {}/{} stable points within {:e} of a band eigenvalue ({:.4}%)",
            report.passed,
            report.checked,
            report.tolerance,
            100.0 * report.pass_fraction()
        ));
        for (rec, d) in &report.exceptions {
            let detail = match d {
                Some(d) => format!("nearest band {} deviation {:e}", format_complex(d.nearest_band), d.deviation),
                None => "band solve failed".into(),
            };
            emission.notes.push(format!(
                "cross-check exception: alpha={}/{} gamma_sq={:?} beta={:?}: {detail}",
                rec.p, rec.q, rec.gamma_sq, rec.beta
            ));
        }
    }
    Ok(emission)
}

pub fn selftest(args: &SelftestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let json = match args.format.as_deref() {
        None | Some("text") => false,
        Some("json") => true,
        Some(other) => return Err(CliError::Config(format!("unknown selftest format {other:?}, expected text or json"))),
    };
    let report = run_selftest();
    let io = |e: std::io::Error| CliError::Io(format!("cannot write stdout: {e}"));
    if json {
        let v = serde_json::json!({"passed": report.passed(), "failed": report.failed(), "checks": report.checks});
        writeln!(out, "{}", serde_json::to_string_pretty(&v).expect("serializable")).map_err(io)?;
    } else {
        for c in &report.checks {
            writeln!(out, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail).map_err(io)?;
        }
        writeln!(out, "selftest: {} passed, {} failed", report.passed(), report.failed()).map_err(io)?;
    }
    if report.failed() > 0 {
        return Err(CliError::SelfTest(format!("{} of {} checks failed", report.failed(), report.checks.len())));
    }
    Ok(())
}
