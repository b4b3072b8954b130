//! Batch front-end: analyze channels, emit predictions and oracle
//! comparisons as CSV or JSON tables for offline plotting.
//!
//! ```text
//! exactrc analyze|predict|oracle|compare --channel FILE --rate SPEC --n LIST
//!         [--tie uniform|error] [--samples N] [--seed N] [--grid δ]
//!         [--format csv|json] [--force-regime below|crit|above]
//! ```
//!
//! Rates are nats per symbol, given either absolutely ("0.25") or relative
//! to the channel's thresholds ("i*0.5", "crit*1.2"). All numbers print in
//! round-trip scientific notation, identically in both output formats, so
//! tables are reproducible bit for bit given (config, seed). The env var
//! EXACTRC_THREADS bounds Monte Carlo worker threads without changing any
//! output.

use crate::asymptotics::{predict, Prediction, TieRule};
use crate::channel::{load_channel, DiscreteChannel};
use crate::classify::{classify_channel, classify_pair, lattice_scan};
use crate::exponent::{
    critical_rate, solve_exponent_with, z_support, RateAnalysis, Regime, SolveOptions,
};
use crate::oracle::{
    effective_codebook, exact_prc, mc_prc, OracleError, OracleEstimate, OracleOptions,
};
use crate::tilt::{tilted_stats, TiltedStats};
use std::fmt;

#[derive(Debug)]
pub struct CliError(pub String);

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for CliError {}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Predict,
    Oracle,
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Parsed invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub channel_path: String,
    pub rate_spec: String,
    pub n_list: Vec<usize>,
    pub tie: TieRule,
    pub samples: usize,
    pub seed: u64,
    pub grid: Option<f64>,
    pub format: Format,
    pub force_regime: Option<Regime>,
    pub at_crit_tol: f64,
    pub type_cap: u64,
    pub cell_cap: u64,
}

pub const USAGE: &str = "usage: exactrc <analyze|predict|oracle|compare> \
--channel FILE --rate SPEC [--n LIST] [--tie uniform|error] [--samples N] \
[--seed N] [--grid DELTA] [--format csv|json] [--force-regime below|crit|above] \
[--crit-tol X] [--type-cap N] [--cell-cap N]";

pub fn parse_args(args: &[String]) -> Result<RunConfig, CliError> {
    let mut it = args.iter();
    let command = match it.next().map(String::as_str) {
        Some("analyze") => Command::Analyze,
        Some("predict") => Command::Predict,
        Some("oracle") => Command::Oracle,
        Some("compare") => Command::Compare,
        other => {
            return Err(CliError(format!(
                "unknown or missing subcommand {other:?}\n{USAGE}"
            )))
        }
    };
    let mut cfg = RunConfig {
        command,
        channel_path: String::new(),
        rate_spec: String::new(),
        n_list: Vec::new(),
        tie: TieRule::UniformRandom,
        samples: 100_000,
        seed: 1,
        grid: None,
        format: Format::Csv,
        force_regime: None,
        at_crit_tol: 1e-9,
        type_cap: OracleOptions::default().type_cap,
        cell_cap: OracleOptions::default().cell_cap,
    };
    while let Some(flag) = it.next() {
        let mut value = || {
            it.next()
                .cloned()
                .ok_or_else(|| CliError(format!("flag {flag} needs a value")))
        };
        match flag.as_str() {
            "--channel" => cfg.channel_path = value()?,
            "--rate" => cfg.rate_spec = value()?,
            "--n" => {
                cfg.n_list = value()?
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<usize>()
                            .map_err(|_| CliError(format!("bad block length {s:?}")))
                    })
                    .collect::<Result<_, _>>()?;
                if cfg.n_list.is_empty() || cfg.n_list.contains(&0) {
                    return Err(CliError("--n needs positive integers".into()));
                }
                if cfg.n_list.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(CliError("--n must be strictly increasing".into()));
                }
            }
            "--tie" => {
                cfg.tie = match value()?.as_str() {
                    "uniform" => TieRule::UniformRandom,
                    "error" => TieRule::TieAsError,
                    s => return Err(CliError(format!("bad tie rule {s:?}"))),
                }
            }
            "--samples" => {
                cfg.samples = value()?
                    .parse()
                    .map_err(|_| CliError("bad --samples".into()))?
            }
            "--seed" => {
                cfg.seed = value()?
                    .parse()
                    .map_err(|_| CliError("bad --seed".into()))?
            }
            "--grid" => {
                let g: f64 = value()?
                    .parse()
                    .map_err(|_| CliError("bad --grid".into()))?;
                if g.is_nan() || g <= 0.0 {
                    return Err(CliError("--grid must be positive".into()));
                }
                cfg.grid = Some(g);
            }
            "--format" => {
                cfg.format = match value()?.as_str() {
                    "csv" => Format::Csv,
                    "json" => Format::Json,
                    s => return Err(CliError(format!("bad format {s:?}"))),
                }
            }
            "--force-regime" => {
                cfg.force_regime = Some(match value()?.as_str() {
                    "below" => Regime::BelowCritical,
                    "crit" => Regime::AtCritical,
                    "above" => Regime::AboveCritical,
                    s => return Err(CliError(format!("bad regime {s:?}"))),
                })
            }
            "--crit-tol" => {
                cfg.at_crit_tol = value()?
                    .parse()
                    .map_err(|_| CliError("bad --crit-tol".into()))?
            }
            "--type-cap" => {
                cfg.type_cap = value()?
                    .parse()
                    .map_err(|_| CliError("bad --type-cap".into()))?
            }
            "--cell-cap" => {
                cfg.cell_cap = value()?
                    .parse()
                    .map_err(|_| CliError("bad --cell-cap".into()))?
            }
            s => return Err(CliError(format!("unknown flag {s:?}\n{USAGE}"))),
        }
    }
    if cfg.channel_path.is_empty() {
        return Err(CliError(format!("--channel is required\n{USAGE}")));
    }
    if cfg.rate_spec.is_empty() {
        return Err(CliError(format!("--rate is required\n{USAGE}")));
    }
    if cfg.command != Command::Analyze && cfg.n_list.is_empty() {
        return Err(CliError("--n is required for this command".into()));
    }
    Ok(cfg)
}

/// "0.25", "i*0.6" (fraction of mutual information) or "crit*1.2"
/// (fraction of the critical rate).
pub fn resolve_rate(spec: &str, ch: &DiscreteChannel) -> Result<f64, CliError> {
    let s = spec.trim().to_ascii_lowercase();
    let value = if let Some(frac) = s.strip_prefix("i*") {
        let f: f64 = frac
            .parse()
            .map_err(|_| CliError(format!("bad rate spec {spec:?}")))?;
        f * ch.mutual_information()
    } else if let Some(frac) = s.strip_prefix("crit*") {
        let f: f64 = frac
            .parse()
            .map_err(|_| CliError(format!("bad rate spec {spec:?}")))?;
        f * critical_rate(ch)
    } else {
        s.parse()
            .map_err(|_| CliError(format!("bad rate spec {spec:?}")))?
    };
    if !value.is_finite() {
        return Err(CliError(format!("rate spec {spec:?} is not finite")));
    }
    Ok(value)
}

// ---------------------------------------------------------------------------
// Output tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum Cell {
    Str(String),
    Num(f64),
    Int(i64),
    Bool(bool),
    Empty,
}

#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

/// Round-trip scientific notation; both output formats share it verbatim.
fn fmt_num(v: f64) -> String {
    format!("{v:e}")
}

impl Table {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.render_csv(),
            Format::Json => self.render_json(),
        }
    }

    fn render_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Str(s) => s.clone(),
                    Cell::Num(v) => fmt_num(*v),
                    Cell::Int(i) => i.to_string(),
                    Cell::Bool(b) => b.to_string(),
                    Cell::Empty => String::new(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    fn render_json(&self) -> String {
        let mut out = String::from("[");
        for (ri, row) in self.rows.iter().enumerate() {
            if ri > 0 {
                out.push(',');
            }
            out.push_str("\n  {");
            for (ci, (name, cell)) in self.columns.iter().zip(row).enumerate() {
                if ci > 0 {
                    out.push_str(", ");
                }
                out.push_str(&format!("\"{name}\": "));
                match cell {
                    Cell::Str(s) => {
                        out.push('"');
                        out.push_str(&s.replace('\\', "\\\\").replace('"', "\\\""));
                        out.push('"');
                    }
                    Cell::Num(v) => out.push_str(&fmt_num(*v)),
                    Cell::Int(i) => out.push_str(&i.to_string()),
                    Cell::Bool(b) => out.push_str(&b.to_string()),
                    Cell::Empty => out.push_str("null"),
                }
            }
            out.push('}');
        }
        out.push_str("\n]\n");
        out
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct Analysis {
    ra: RateAnalysis,
    ts: TiltedStats,
    cc: crate::classify::ChannelClass,
    pc: crate::classify::PairClass,
}

fn analyze_at(ch: &DiscreteChannel, r: f64, cfg: &RunConfig) -> Result<Analysis, CliError> {
    let opts = SolveOptions {
        at_crit_tol: cfg.at_crit_tol,
        forced: cfg.force_regime,
    };
    let ra = solve_exponent_with(ch, r, opts).map_err(|e| CliError(e.to_string()))?;
    let zs = z_support(ch, ra.eta);
    let ts = tilted_stats(&zs, ra.rho, ra.r);
    let cc = classify_channel(&ch.nu_table(), ch);
    let pc = classify_pair(&zs, &ts);
    Ok(Analysis { ra, ts, cc, pc })
}

fn load(cfg: &RunConfig) -> Result<DiscreteChannel, CliError> {
    let text = std::fs::read_to_string(&cfg.channel_path)
        .map_err(|e| CliError(format!("cannot read {}: {e}", cfg.channel_path)))?;
    let (ch, report) = load_channel(&text).map_err(|e| CliError(e.to_string()))?;
    if !report.is_empty() {
        eprintln!(
            "note: pruned zero-probability inputs {:?} and dead output columns {:?}",
            report.dropped_inputs, report.dropped_outputs
        );
    }
    Ok(ch)
}

fn oracle_options(cfg: &RunConfig) -> OracleOptions {
    OracleOptions {
        type_cap: cfg.type_cap,
        cell_cap: cfg.cell_cap,
        grid: cfg.grid,
        force_rho: None,
        threads: None,
    }
}

pub fn cmd_analyze(cfg: &RunConfig) -> Result<Table, CliError> {
    let ch = load(cfg)?;
    let r = resolve_rate(&cfg.rate_spec, &ch)?;
    let a = analyze_at(&ch, r, cfg)?;
    let mut rows: Vec<Vec<Cell>> = Vec::new();
    let mut kv = |k: &str, c: Cell| rows.push(vec![Cell::Str(k.into()), c]);
    kv("inputs", Cell::Int(ch.num_inputs() as i64));
    kv("outputs", Cell::Int(ch.num_outputs() as i64));
    kv("rate", Cell::Num(a.ra.r));
    kv("mutual_information", Cell::Num(a.ra.mi));
    kv("critical_rate", Cell::Num(a.ra.rcrit));
    kv("regime", Cell::Str(a.ra.regime.to_string()));
    kv("rho", Cell::Num(a.ra.rho));
    kv("eta", Cell::Num(a.ra.eta));
    kv("error_exponent", Cell::Num(a.ra.er));
    kv("lambda_rho", Cell::Num(a.ra.lambda_rho));
    kv("delta", Cell::Num(a.ra.delta));
    kv("mu0", Cell::Num(a.ts.mu0));
    kv("mu1", Cell::Num(a.ts.mu1));
    kv("mu2", Cell::Num(a.ts.mu2));
    kv("sigma00", Cell::Num(a.ts.sigma00));
    kv("sigma01", Cell::Num(a.ts.sigma01));
    kv("sigma11", Cell::Num(a.ts.sigma11));
    kv("det_sigma", Cell::Num(a.ts.det_sigma));
    kv("singular", Cell::Bool(a.cc.singular));
    kv("nu_span", Cell::Num(a.cc.nu_span));
    kv("strongly_symmetric", Cell::Bool(a.cc.strongly_symmetric));
    kv("pseudo_symmetric", Cell::Bool(a.pc.pseudo_symmetric));
    match &a.pc.z_lattice {
        Some(zl) => {
            kv("z_lattice_span", Cell::Num(zl.h_prime));
            kv("z_lattice_offset", Cell::Num(zl.a_prime));
        }
        None => {
            kv("z_lattice_span", Cell::Empty);
            kv("z_lattice_offset", Cell::Empty);
        }
    }
    // Consistency note: strongly symmetric channels must be pseudo-symmetric
    // with h' = η h (lattice case).
    if a.cc.strongly_symmetric {
        let consistent = a.pc.pseudo_symmetric
            && match (&a.pc.z_lattice, a.cc.nu_span) {
                (Some(zl), h) if h > 0.0 => (zl.h_prime - a.ra.eta * h).abs() <= 1e-9,
                (None, h) => h == 0.0,
                _ => false,
            };
        kv("symmetry_consistency", Cell::Bool(consistent));
    }
    // Residue diagnostics when the ν values were declared nonlattice.
    if !a.cc.singular && a.cc.nu_span == 0.0 {
        let scan = lattice_scan(
            &ch.nu_table().finite_values(),
            crate::classify::LATTICE_REL_TOL,
        );
        kv("nu_span_candidate", Cell::Num(scan.candidate));
        kv(
            "nu_span_max_residue",
            if scan.max_residue.is_finite() {
                Cell::Num(scan.max_residue)
            } else {
                Cell::Empty
            },
        );
    }
    let branch_preview = predict(&a.ra, &a.ts, &a.cc, &a.pc, 1, cfg.tie)
        .map(|p| p.branch.to_string())
        .unwrap_or_else(|e| format!("unavailable: {e}"));
    kv("branch_preview", Cell::Str(branch_preview));
    Ok(Table {
        columns: vec!["key", "value"],
        rows,
    })
}

fn predict_row(p: &Prediction, er: f64) -> Vec<Cell> {
    vec![
        Cell::Int(p.n as i64),
        Cell::Str(p.branch.to_string()),
        Cell::Num(er),
        Cell::Num(p.prefactor),
        p.i_n.map(Cell::Num).unwrap_or(Cell::Empty),
        p.c2.map(Cell::Num).unwrap_or(Cell::Empty),
        Cell::Num(p.log_value / std::f64::consts::LN_10),
        Cell::Bool(p.oscillating),
        p.prefactor_display_variant
            .map(Cell::Num)
            .unwrap_or(Cell::Empty),
    ]
}

const PREDICT_COLUMNS: [&str; 9] = [
    "n",
    "branch",
    "er",
    "prefactor",
    "i_n",
    "c2",
    "log10_p_pred",
    "oscillating",
    "prefactor_display_variant",
];

pub fn cmd_predict(cfg: &RunConfig) -> Result<Table, CliError> {
    let ch = load(cfg)?;
    let r = resolve_rate(&cfg.rate_spec, &ch)?;
    let a = analyze_at(&ch, r, cfg)?;
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let p = predict(&a.ra, &a.ts, &a.cc, &a.pc, n as u64, cfg.tie)
            .map_err(|e| CliError(e.to_string()))?;
        rows.push(predict_row(&p, a.ra.er));
    }
    Ok(Table {
        columns: PREDICT_COLUMNS.to_vec(),
        rows,
    })
}

/// Oracle value at the effective codebook size M_n = ⌈e^{nR}⌉: exact type
/// enumeration when the caps allow it, importance-sampled Monte Carlo
/// otherwise.
fn oracle_at(
    ch: &DiscreteChannel,
    cfg: &RunConfig,
    n: usize,
    m: f64,
    r_n: f64,
) -> Result<OracleEstimate, CliError> {
    let opts = oracle_options(cfg);
    match exact_prc(ch, n, m, cfg.tie, &opts) {
        Ok(est) => Ok(est),
        Err(
            OracleError::TypeCapExceeded { .. }
            | OracleError::CellCapExceeded { .. }
            | OracleError::NonLatticeNeedsGrid { .. },
        ) => {
            let solve = SolveOptions {
                at_crit_tol: cfg.at_crit_tol,
                forced: cfg.force_regime,
            };
            let ra = solve_exponent_with(ch, r_n, solve).map_err(|e| CliError(e.to_string()))?;
            Ok(mc_prc(
                ch,
                &ra,
                n,
                m,
                cfg.tie,
                cfg.samples,
                cfg.seed,
                &opts,
            )?)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_oracle(cfg: &RunConfig) -> Result<Table, CliError> {
    let ch = load(cfg)?;
    let r = resolve_rate(&cfg.rate_spec, &ch)?;
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let (m, r_n) = effective_codebook(n, r);
        let est = oracle_at(&ch, cfg, n, m, r_n)?;
        rows.push(vec![
            Cell::Int(n as i64),
            Cell::Num(m),
            Cell::Num(r_n),
            Cell::Str(est.method.to_string()),
            Cell::Num(est.value),
            Cell::Num(est.stderr),
        ]);
    }
    Ok(Table {
        columns: vec!["n", "m_n", "r_n", "method", "value", "stderr"],
        rows,
    })
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<Table, CliError> {
    let ch = load(cfg)?;
    let r = resolve_rate(&cfg.rate_spec, &ch)?;
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let (m, r_n) = effective_codebook(n, r);
        // Re-solve at the effective rate: P_RC depends on the integer M_n,
        // and comparing at the nominal R would inject an O(1) artifact.
        let a = analyze_at(&ch, r_n, cfg)?;
        let p = predict(&a.ra, &a.ts, &a.cc, &a.pc, n as u64, cfg.tie)
            .map_err(|e| CliError(e.to_string()))?;
        let p_pred = p.log_value.exp();
        let est = oracle_at(&ch, cfg, n, m, r_n)?;
        rows.push(vec![
            Cell::Int(n as i64),
            Cell::Num(est.value),
            Cell::Num(p_pred),
            Cell::Num(est.value / p_pred),
            Cell::Num(est.stderr / p_pred),
        ]);
    }
    Ok(Table {
        columns: vec!["n", "p_oracle", "p_pred", "ratio", "stderr_ratio"],
        rows,
    })
}

/// Entry point: parse, dispatch, render.
pub fn run(args: &[String]) -> Result<String, CliError> {
    let cfg = parse_args(args)?;
    let table = match cfg.command {
        Command::Analyze => cmd_analyze(&cfg)?,
        Command::Predict => cmd_predict(&cfg)?,
        Command::Oracle => cmd_oracle(&cfg)?,
        Command::Compare => cmd_compare(&cfg)?,
    };
    Ok(table.render(cfg.format))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn parse_full_flag_set() {
        let cfg = parse_args(&args(&[
            "compare",
            "--channel",
            "ch.json",
            "--rate",
            "crit*1.2",
            "--n",
            "10,20,40",
            "--tie",
            "error",
            "--samples",
            "5000",
            "--seed",
            "9",
            "--grid",
            "0.01",
            "--format",
            "json",
            "--force-regime",
            "above",
        ]))
        .unwrap();
        assert_eq!(cfg.command, Command::Compare);
        assert_eq!(cfg.n_list, vec![10, 20, 40]);
        assert_eq!(cfg.tie, TieRule::TieAsError);
        assert_eq!(cfg.samples, 5000);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.grid, Some(0.01));
        assert_eq!(cfg.format, Format::Json);
        assert_eq!(cfg.force_regime, Some(Regime::AboveCritical));
    }

    #[test]
    fn parse_rejects_bad_inputs() {
        assert!(parse_args(&args(&["bogus"])).is_err());
        assert!(parse_args(&args(&["predict", "--channel", "x"])).is_err());
        assert!(parse_args(&args(&[
            "predict",
            "--channel",
            "x",
            "--rate",
            "0.1",
            "--n",
            "5,3"
        ]))
        .is_err());
        assert!(parse_args(&args(&[
            "predict",
            "--channel",
            "x",
            "--rate",
            "0.1",
            "--n",
            "0"
        ]))
        .is_err());
    }

    #[test]
    fn rate_specs_resolve() {
        let ch = DiscreteChannel::bsc(0.11);
        let i = ch.mutual_information();
        let rc = critical_rate(&ch);
        assert!((resolve_rate("0.125", &ch).unwrap() - 0.125).abs() < 1e-15);
        assert!((resolve_rate("i*0.5", &ch).unwrap() - 0.5 * i).abs() < 1e-15);
        assert!((resolve_rate("crit*1.2", &ch).unwrap() - 1.2 * rc).abs() < 1e-15);
        assert!(resolve_rate("nope", &ch).is_err());
    }

    #[test]
    fn csv_and_json_emit_identical_numbers() {
        let t = Table {
            columns: vec!["a", "b"],
            rows: vec![
                vec![Cell::Num(0.1), Cell::Num(1.0 / 3.0)],
                vec![Cell::Num(2.5e-13), Cell::Empty],
            ],
        };
        let csv = t.render(Format::Csv);
        let json = t.render(Format::Json);
        for v in [0.1f64, 1.0 / 3.0, 2.5e-13] {
            let s = fmt_num(v);
            assert!(csv.contains(&s), "csv missing {s}");
            assert!(json.contains(&s), "json missing {s}");
            // Round-trip through 17 significant digits.
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits());
        }
        let parsed: serde_json::Value = serde_json::from_str(&json).expect("valid JSON");
        assert_eq!(parsed.as_array().unwrap().len(), 2);
        assert!((parsed[0]["a"].as_f64().unwrap() - 0.1).abs() < 1e-300);
        assert!(parsed[1]["b"].is_null());
    }
}
