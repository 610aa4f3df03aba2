use std::fs;
use std::path::Path;

use negdelay_core::analysis::{self, bessel_order_study, fwhm_spread, scaling_sweep, OrderRow, PowerLawFit, SweepRow};
use negdelay_core::blocks::{self, design_chain_tf, design_stage, nd, DesignParams};
use negdelay_core::dsl::{load_chain, parse_chain, parse_expr, Diagnostic};
use negdelay_core::tf::unwrap_phase;
use negdelay_core::timesim::{chain_taps, run_chain_with, simulate_ode};
use negdelay_core::{
    AnalysisReport, CutoffNormalization, Method, RationalTF, SimConfig, SimError, SourceParams, Stability,
    StabilityVerdict, Waveform,
};
use serde::Serialize;

use crate::error::CliError;
use crate::output::{json, num, report, Csv, Sink};
use crate::{
    BodeArgs, DesignArgs, Format, MethodArg, Normalization, PolesArgs, RunArgs, SimulateArgs, SweepArgs, TfSource,
};

const SIMULATE_T_END: f64 = 12.0;
/// Sweep records run to this many pulse widths `1/ω_c`.
const SWEEP_T_END_WIDTHS: f64 = 40.0;

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn diagnostics(origin: &str, diags: &[Diagnostic]) -> CliError {
    let lines: Vec<String> = diags.iter().map(|d| format!("{origin}:{d}")).collect();
    CliError::Input(lines.join("\n"))
}

fn load_tf(source: &TfSource) -> Result<RationalTF, CliError> {
    match (&source.expr, &source.chain) {
        (Some(e), _) => {
            let expr = parse_expr(e).map_err(|d| diagnostics("<expr>", &d))?;
            Ok(expr.to_tf()?)
        }
        (None, Some(path)) => {
            let chain = parse_chain(&read(path)?).map_err(|d| diagnostics(&path.display().to_string(), &d))?;
            Ok(chain.composite()?)
        }
        (None, None) => Err(CliError::Input("one of --expr or --chain is required".into())),
    }
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Input(format!("{name} must be positive and finite, got {v}")))
    }
}

#[derive(Serialize)]
struct BodeRow {
    omega_rad_s: f64,
    amplitude: Option<f64>,
    phase_rad_unwrapped: Option<f64>,
    group_delay_s: Option<f64>,
}

pub fn bode(a: &BodeArgs) -> Result<(), CliError> {
    let lo = positive("--omega-min", a.omega_min)?;
    let hi = positive("--omega-max", a.omega_max)?;
    if hi <= lo || a.points < 2 {
        return Err(CliError::Input(
            "need --omega-max > --omega-min and --points >= 2".into(),
        ));
    }
    let tf = load_tf(&a.source)?;
    let ratio = hi / lo;
    let omegas: Vec<f64> = (0..a.points)
        .map(|k| lo * ratio.powf(k as f64 / (a.points - 1) as f64))
        .collect();

    let values: Vec<Option<(f64, f64, f64)>> = omegas
        .iter()
        .map(|&w| {
            let h = tf.eval(w).ok()?;
            let gd = tf.group_delay(w).ok()?;
            Some((h.norm(), h.arg(), gd))
        })
        .collect();
    let wrapped: Vec<f64> = values.iter().flatten().map(|v| v.1).collect();
    let mut unwrapped = unwrap_phase(&wrapped).into_iter();
    let rows: Vec<BodeRow> = omegas
        .iter()
        .zip(&values)
        .map(|(&w, v)| match v {
            Some((amp, _, gd)) => BodeRow {
                omega_rad_s: w,
                amplitude: Some(*amp),
                phase_rad_unwrapped: unwrapped.next(),
                group_delay_s: Some(*gd),
            },
            None => BodeRow {
                omega_rad_s: w,
                amplitude: None,
                phase_rad_unwrapped: None,
                group_delay_s: None,
            },
        })
        .collect();

    let sink = Sink::new(a.output.out.as_deref(), a.output.out_dir.as_deref());
    let bytes = match a.output.format {
        Format::Json => json(&rows),
        Format::Csv => {
            let mut csv = Csv::new(&["omega_rad_s", "amplitude", "phase_rad_unwrapped", "group_delay_s"]);
            let opt = |v: Option<f64>| num(v.unwrap_or(f64::NAN));
            for r in &rows {
                csv.row([
                    num(r.omega_rad_s),
                    opt(r.amplitude),
                    opt(r.phase_rad_unwrapped),
                    opt(r.group_delay_s),
                ]);
            }
            csv.into_bytes()
        }
    };
    sink.write(&bytes)?;
    let bad = values.iter().filter(|v| v.is_none()).count();
    if bad > 0 {
        return Err(CliError::PoleInSweep { count: bad });
    }
    Ok(())
}

fn sim_config(run: &RunArgs, default_t_end: f64) -> Result<SimConfig, CliError> {
    let dt = positive("--dt", run.dt)?;
    let t_end = positive("--t-end", run.t_end.unwrap_or(default_t_end))?;
    if run.substeps == 0 {
        return Err(CliError::Input("--substeps must be at least 1".into()));
    }
    Ok(SimConfig {
        dt,
        t_end,
        method: match run.method {
            MethodArg::Fft => Method::Fft,
            MethodArg::Ode | MethodArg::Both => Method::Ode,
        },
        substeps: run.substeps,
    })
}

#[derive(Serialize)]
struct TapDeviation {
    tap: String,
    /// Max |fft - ode| over max |ode|; absent when the tap is improper.
    max_rel_deviation: Option<f64>,
}

#[derive(Serialize)]
struct SimulateReport {
    method: &'static str,
    dt: f64,
    t_end: f64,
    samples: usize,
    taps: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    analysis: Option<AnalysisReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    analysis_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cross_check: Option<Vec<TapDeviation>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_cross_deviation: Option<f64>,
    stability: StabilityVerdict,
    warnings: Vec<Diagnostic>,
}

#[derive(Serialize)]
struct Column<'a> {
    name: &'a str,
    samples: &'a [f64],
}

#[derive(Serialize)]
struct SimulateDocument<'a> {
    t: Vec<f64>,
    taps: Vec<Column<'a>>,
    report: &'a SimulateReport,
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let origin = a.chain.display().to_string();
    let (chain, warnings) = load_chain(&read(&a.chain)?).map_err(|d| diagnostics(&origin, &d))?;
    for w in &warnings {
        eprintln!("{origin}:{w}");
    }
    let mut config = sim_config(&a.run, SIMULATE_T_END)?;
    let both = a.run.method == MethodArg::Both;
    if both {
        config.method = Method::Fft;
    }
    let taps = run_chain_with(&chain, &config)?;

    let cross_check = if both {
        let source = &taps[0].1;
        let mut devs = Vec::new();
        for ((name, tf), (_, fft)) in chain_taps(&chain)?.iter().zip(&taps) {
            let dev = match simulate_ode(tf, source, config.substeps) {
                Ok(ode) => Some(fft.rel_linf_distance(&ode).map_err(SimError::from)?),
                Err(SimError::Improper { .. }) => None,
                Err(e) => {
                    return Err(SimError::Tap {
                        tap: name.clone(),
                        source: Box::new(e),
                    }
                    .into())
                }
            };
            devs.push(TapDeviation {
                tap: name.clone(),
                max_rel_deviation: dev,
            });
        }
        Some(devs)
    } else {
        None
    };
    let max_cross_deviation = cross_check.as_ref().and_then(|d| {
        d.iter()
            .filter_map(|t| t.max_rel_deviation)
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
    });

    let stability = chain.composite()?.poles();
    let find = |name: &str| taps.iter().find(|(n, _)| n == name).map(|(_, w)| w);
    let (analysis, analysis_error) = match (find("input"), find("output")) {
        (Some(i), Some(o)) => match analysis::measure_advance(i, o, true) {
            Ok(mut r) => {
                r.stability = Some(stability.clone());
                (Some(r), None)
            }
            Err(e) => (None, Some(e.to_string())),
        },
        _ => (None, None),
    };
    let source = &taps[0].1;
    let report_doc = SimulateReport {
        method: match a.run.method {
            MethodArg::Fft => "fft",
            MethodArg::Ode => "ode",
            MethodArg::Both => "both",
        },
        dt: config.dt,
        t_end: config.t_end,
        samples: source.len(),
        taps: taps.iter().map(|(n, _)| n.clone()).collect(),
        analysis,
        analysis_error,
        cross_check,
        max_cross_deviation,
        stability,
        warnings,
    };

    let sink = Sink::new(a.output.out.as_deref(), a.output.out_dir.as_deref());
    match a.output.format {
        Format::Csv => {
            sink.write(&waveform_csv(&taps))?;
            report(&sink, &report_doc)
        }
        Format::Json => {
            let doc = SimulateDocument {
                t: source.times().collect(),
                taps: taps
                    .iter()
                    .map(|(name, w)| Column {
                        name,
                        samples: w.samples(),
                    })
                    .collect(),
                report: &report_doc,
            };
            sink.write(&json(&doc))
        }
    }
}

fn waveform_csv(taps: &[(String, Waveform)]) -> Vec<u8> {
    let mut header = vec!["t"];
    header.extend(taps.iter().map(|(n, _)| n.as_str()));
    let mut csv = Csv::new(&header);
    let source = &taps[0].1;
    for (k, t) in source.times().enumerate() {
        csv.row(std::iter::once(num(t)).chain(taps.iter().map(|(_, w)| num(w.samples()[k]))));
    }
    csv.into_bytes()
}

#[derive(Serialize)]
struct DesignReport {
    #[serde(flatten)]
    design: DesignParams,
    alpha: f64,
    /// `|H(iω_c)| - 1` of the `n` negative-delay stages alone.
    stage_excess_gain: f64,
    /// Group delay of the full designed chain at DC.
    dc_group_delay: f64,
    chain: String,
}

/// Chain text for a design: the low-pass tapped as `input`, the stages as `output`.
pub fn design_chain_text(d: &DesignParams) -> String {
    format!(
        "# {n}-stage negative-delay cascade: gamma = {gamma}, omega_c = {wc} rad/s, T_total = {total} s\n\
         source rect(width={width})\n\
         stage bessel(m={m}, wc={wc}) as input\n\
         stage nd(T={t})^{n} as output\n",
        n = d.n,
        gamma = d.gamma,
        wc = d.omega_c,
        total = d.t_total,
        width = d.t_w,
        m = d.m,
        t = d.t,
    )
}

pub fn design(a: &DesignArgs) -> Result<(), CliError> {
    let d = design_stage(a.n, a.gamma, a.omega_c)?;
    let text = design_chain_text(&d);
    let (_, warnings) = load_chain(&text).map_err(|diags| diagnostics("<design>", &diags))?;
    if !warnings.is_empty() {
        return Err(diagnostics("<design>", &warnings));
    }
    let tf = design_chain_tf(&d, blocks::BESSEL_ALPHA)?;
    let doc = DesignReport {
        design: d,
        alpha: blocks::BESSEL_ALPHA,
        stage_excess_gain: blocks::excess_gain(&nd(d.t)?.powi(d.n), d.omega_c)?,
        dc_group_delay: tf.group_delay(0.0)?,
        chain: text,
    };
    Sink::new(a.out.as_deref(), a.out_dir.as_deref()).write(&json(&doc))
}

#[derive(Serialize)]
struct SweepReport<'a> {
    gamma: f64,
    omega_c: f64,
    width: f64,
    m: u32,
    fit: Option<PowerLawFit>,
    distortion_ratio: f64,
    rows: &'a [SweepRow],
}

#[derive(Serialize)]
struct OrderReport<'a> {
    omega_c: f64,
    width: f64,
    normalization: CutoffNormalization,
    fwhm_spread: f64,
    rise_strictly_increasing: bool,
    rows: &'a [OrderRow],
}

pub fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let omega_c = positive("--omega-c", a.omega_c)?;
    let width = positive("--width", a.width.unwrap_or(1.0 / omega_c))?;
    let config = sim_config(&a.run, SWEEP_T_END_WIDTHS / omega_c)?;
    let sink = Sink::new(a.output.out.as_deref(), a.output.out_dir.as_deref());

    if let Some(orders) = &a.bessel_orders {
        let normalization = match a.normalization {
            Normalization::Cascade => CutoffNormalization::Cascade,
            Normalization::PerSection => CutoffNormalization::PerSection,
        };
        let rows = bessel_order_study(orders, omega_c, width, normalization, &config)?;
        let doc = OrderReport {
            omega_c,
            width,
            normalization,
            fwhm_spread: fwhm_spread(&rows),
            rise_strictly_increasing: rows.windows(2).all(|w| w[1].rise_delay_50pct > w[0].rise_delay_50pct),
            rows: &rows,
        };
        return match a.output.format {
            Format::Json => sink.write(&json(&doc)),
            Format::Csv => {
                let mut csv = Csv::new(&["m", "rise_delay_50pct_s", "fwhm_s", "peak_time_s"]);
                for r in &rows {
                    csv.row([r.m.to_string(), num(r.rise_delay_50pct), num(r.fwhm), num(r.peak_time)]);
                }
                sink.write(&csv.into_bytes())?;
                report(&sink, &doc)
            }
        };
    }

    let table = scaling_sweep(&a.n_values, a.gamma, omega_c, &SourceParams::new(width), &config)?;
    let doc = SweepReport {
        gamma: table.gamma,
        omega_c,
        width,
        m: table.m,
        fit: table.fit,
        distortion_ratio: table.distortion_ratio(),
        rows: &table.rows,
    };
    match a.output.format {
        Format::Json => sink.write(&json(&doc))?,
        Format::Csv => {
            let mut csv = Csv::new(&[
                "n",
                "T_s",
                "T_total_predicted_s",
                "advance_measured_s",
                "distortion",
                "fwhm_in_s",
            ]);
            for r in &table.rows {
                csv.row([
                    r.n.to_string(),
                    num(r.t),
                    num(r.t_total_predicted),
                    num(r.advance_measured),
                    num(r.distortion),
                    num(r.fwhm_in),
                ]);
            }
            sink.write(&csv.into_bytes())?;
            report(&sink, &doc)?;
        }
    }
    match table.fit {
        Some(fit) if !(0.4..=0.6).contains(&fit.exponent) => Err(CliError::FitOutOfRange { exponent: fit.exponent }),
        _ => Ok(()),
    }
}

pub fn poles(a: &PolesArgs) -> Result<(), CliError> {
    let verdict = load_tf(&a.source)?.poles();
    Sink::new(a.out.as_deref(), a.out_dir.as_deref()).write(&json(&verdict))?;
    if verdict.classification == Stability::Unstable {
        return Err(CliError::Unstable);
    }
    Ok(())
}
