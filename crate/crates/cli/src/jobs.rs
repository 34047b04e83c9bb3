//! Runs every (ensemble, analysis) cell of a job and collects the rows in config order.

use ccgldpc::thresholds::{certify_bracket, ExitGrid};
use ccgldpc::trellis::{GeneratorSpec, Trellis};
use ccgldpc::weights::{self, dmin_point, dmin_point_bcc, CapPolicy};
use ccgldpc::{
    bp_threshold, exit_curve, map_threshold, mc_transfer_oracle, Component, DeConfig, Diagnostics, Ensemble, EnsembleSpec,
    Execution, TransferFunction,
};
use serde_json::{json, Value};

use crate::config::{Analysis, EnsembleEntry, JobConfig};
use crate::output::{Row, Table};

/// Note attached to `d_v = 2` parity-check rows, whose thresholds here follow
/// the bit-erasure DE criterion.
pub const BIT_ERASURE_NOTE: &str = "criterion=bit-erasure-DE";

pub struct JobOutput {
    pub table: Table,
    pub failed_cells: usize,
}

struct Cell<'a> {
    entry: &'a EnsembleEntry,
    spec: EnsembleSpec,
    analysis: Analysis,
}

/// Single-ensemble curve jobs move the ensemble identity into the header and
/// keep only the curve columns.
fn is_curve_job(cfg: &JobConfig) -> bool {
    cfg.ensembles.len() == 1
        && cfg.analyses.len() == 1
        && matches!(cfg.analyses[0], Analysis::ExitCurve | Analysis::Dmin | Analysis::Wenum)
}

pub fn run_job(cfg: &JobConfig, specs: &[EnsembleSpec]) -> JobOutput {
    let cells: Vec<Cell> = cfg
        .ensembles
        .iter()
        .zip(specs)
        .flat_map(|(entry, &spec)| cfg.analyses.iter().map(move |&analysis| Cell { entry, spec, analysis }))
        .collect();
    let results = Execution::Parallel.map(&cells, |cell| run_cell(cfg, cell));

    let curve = is_curve_job(cfg);
    let mut failed_cells = 0;
    let mut rows: Vec<Row> = Vec::new();
    for (cell, result) in cells.iter().zip(results) {
        let ident: Row = if curve { Vec::new() } else { identity(cell) };
        match result {
            Ok(cell_rows) => rows.extend(cell_rows.into_iter().map(|r| ident.iter().cloned().chain(r).collect())),
            Err(message) => {
                failed_cells += 1;
                rows.push(ident.into_iter().chain([("error", json!(message))]).collect());
            }
        }
    }
    if failed_cells > 0 {
        for row in &mut rows {
            if !row.iter().any(|(c, _)| *c == "error") {
                row.push(("error", json!("")));
            }
        }
    }

    let mut provenance = provenance(cfg);
    if curve {
        let spec = specs[0];
        provenance.push(("ensemble".into(), format!("{},{}", spec.dv, spec.dc)));
        provenance.push(("component".into(), spec.component.to_string()));
        provenance.push(("coupling".into(), spec.coupling.to_string()));
    }
    JobOutput { table: Table::from_rows(provenance, rows), failed_cells }
}

fn identity(cell: &Cell) -> Row {
    if cell.analysis == Analysis::Transfer {
        return vec![("component", json!(cell.spec.component.to_string())), ("analysis", json!("transfer"))];
    }
    vec![
        ("ensemble", json!(format!("{},{}", cell.spec.dv, cell.spec.dc))),
        ("component", json!(cell.spec.component.to_string())),
        ("coupling", json!(cell.spec.coupling.to_string())),
        ("analysis", json!(cell.analysis.name())),
    ]
}

fn provenance(cfg: &JobConfig) -> Vec<(String, String)> {
    let tolerances = match cfg.tolerances {
        Some(t) => format!("max_iterations={} target={:e} stall_tol={:e}", t.max_iterations, t.target, t.stall_tol),
        None => {
            let (u, c) = (DeConfig::uncoupled(), DeConfig::coupled());
            format!(
                "per ensemble: uncoupled max_iterations={} coupled max_iterations={} target={:e} stall_tol={:e}",
                u.max_iterations, c.max_iterations, u.target, u.stall_tol
            )
        }
    };
    let analyses: Vec<&str> = cfg.analyses.iter().map(|a| a.name()).collect();
    vec![
        ("tool".into(), format!("ccgldpc {}", env!("CARGO_PKG_VERSION"))),
        ("config_sha256".into(), cfg.hash()),
        ("analyses".into(), analyses.join(" ")),
        ("resolution".into(), format!("{:e}", cfg.resolution)),
        ("de_tolerances".into(), tolerances),
        ("alpha".into(), cfg.alpha.to_string()),
        ("seed".into(), cfg.seed.to_string()),
    ]
}

fn de_config(cfg: &JobConfig, spec: &EnsembleSpec) -> DeConfig {
    cfg.tolerances.map(DeConfig::from).unwrap_or_else(|| DeConfig::for_spec(spec))
}

fn tolerance_columns(de: &DeConfig) -> Row {
    vec![
        ("de_max_iterations", json!(de.max_iterations)),
        ("de_target", json!(de.target)),
        ("de_stall_tol", json!(de.stall_tol)),
    ]
}

fn reference_columns(entry: &EnsembleEntry, analysis: Analysis, value: f64) -> Row {
    match entry.reference.get(analysis.name()) {
        Some(&r) => vec![("reference", json!(r)), ("delta", json!(value - r))],
        None => Vec::new(),
    }
}

/// Flags `d_v = 2` rows: LDPC ones always, others when the value sits at the
/// stability limit `1 / g'(0)`, where the bit-erasure criterion decides the result.
fn note(ens: &Ensemble, value: f64, resolution: f64) -> Row {
    let spec = ens.spec();
    let at_limit = ens.zero_unstable(value + 2.0 * resolution);
    if spec.dv == 2 && (spec.component == Component::Spc || at_limit) {
        vec![("note", json!(BIT_ERASURE_NOTE))]
    } else {
        Vec::new()
    }
}

fn run_cell(cfg: &JobConfig, cell: &Cell) -> Result<Vec<Row>, String> {
    let spec = &cell.spec;
    match cell.analysis {
        Analysis::Bp => bp_row(cfg, cell).map(|r| vec![r]),
        Analysis::Map => map_row(cfg, cell).map(|r| vec![r]),
        Analysis::ExitCurve => {
            if spec.is_coupled() {
                return Err("EXIT curves are computed for uncoupled ensembles".into());
            }
            let ens = Ensemble::new(*spec).map_err(|e| e.to_string())?;
            let grid = ExitGrid { step: cfg.exit_step, ..ExitGrid::default() };
            let curve = exit_curve(&ens, &de_config(cfg, spec), &grid).map_err(|e| e.to_string())?;
            Ok(curve
                .samples
                .iter()
                .zip(&curve.upper_bound)
                .map(|(&(e, p), &b)| vec![("epsilon", json!(e)), ("exit", json!(p)), ("upper_bound", json!(b))])
                .collect())
        }
        Analysis::Dmin => dmin_rows(cfg, spec),
        Analysis::Wenum => wenum_rows(cfg, spec),
        Analysis::Transfer => transfer_rows(cfg, spec),
    }
}

fn bp_row(cfg: &JobConfig, cell: &Cell) -> Result<Row, String> {
    let de = de_config(cfg, &cell.spec);
    let ens = Ensemble::new(cell.spec).map_err(|e| e.to_string())?;
    let r = bp_threshold(&ens, &de, cfg.resolution).map_err(|e| e.to_string())?;
    let Diagnostics::Bisection { lo, hi, steps, exhausted, chain_length } = r.diagnostics else {
        unreachable!("bisection diagnostics")
    };
    let mut row: Row = vec![
        ("value", json!(r.value)),
        ("resolution", json!(r.resolution)),
        ("lo", json!(lo)),
        ("hi", json!(hi)),
        ("steps", json!(steps)),
        ("budget_exhausted_runs", json!(exhausted)),
        ("chain_length", chain_length.map_or(Value::Null, |l| json!(l))),
    ];
    if exhausted > 0 {
        row.push(("bracket_certified", json!(certify_bracket(&ens, &de, &r).map_err(|e| e.to_string())?)));
    }
    row.extend(tolerance_columns(&de));
    row.extend(reference_columns(cell.entry, Analysis::Bp, r.value));
    row.extend(note(&ens, r.value, r.resolution));
    Ok(row)
}

fn map_row(cfg: &JobConfig, cell: &Cell) -> Result<Row, String> {
    let de = de_config(cfg, &cell.spec);
    let ens = Ensemble::new(cell.spec).map_err(|e| e.to_string())?;
    let r = map_threshold(&ens, &de, cfg.resolution).map_err(|e| e.to_string())?;
    let Diagnostics::Integration { bp_threshold, grid_points, step, area_margin, bounded_samples, bound_gap } =
        r.diagnostics
    else {
        unreachable!("integration diagnostics")
    };
    let mut row: Row = vec![
        ("value", json!(r.value)),
        ("resolution", json!(r.resolution)),
        ("bp_anchor", json!(bp_threshold)),
        ("grid_points", json!(grid_points)),
        ("grid_step", json!(step)),
        ("area_margin", json!(area_margin)),
        ("bounded_samples", json!(bounded_samples)),
        ("bound_gap", json!(bound_gap)),
    ];
    row.extend(tolerance_columns(&de));
    row.extend(reference_columns(cell.entry, Analysis::Map, r.value));
    row.extend(note(&ens, r.value, r.resolution));
    Ok(row)
}

fn dmin_rows(cfg: &JobConfig, spec: &EnsembleSpec) -> Result<Vec<Row>, String> {
    let cap = cfg.cap.map_or(CapPolicy::default(), CapPolicy::Fixed);
    let segments = cfg.segments_for(spec);
    let points = if cfg.structured {
        let g = match (spec.dv, spec.dc, spec.component) {
            (2, 3, Component::Conv(g)) => g,
            _ => return Err("the structured bound is defined for (2,3) convolutional ensembles".into()),
        };
        segments.iter().map(|&n| dmin_point_bcc(&g, cfg.alpha, n, cap)).collect::<Result<Vec<_>, _>>()
    } else {
        let spec = spec.uncoupled();
        Execution::Parallel.map(&segments, |&n| dmin_point(&spec, cfg.alpha, n, cap)).into_iter().collect()
    }
    .map_err(|e| e.to_string())?;
    Ok(points
        .iter()
        .map(|p| {
            vec![
                ("n", json!(p.n)),
                ("d_hat", json!(p.d_hat)),
                ("truncated", json!(p.truncated)),
                ("cap", json!(p.cap)),
                ("segments", json!(p.segments)),
            ]
        })
        .collect())
}

fn wenum_rows(cfg: &JobConfig, spec: &EnsembleSpec) -> Result<Vec<Row>, String> {
    let cap = cfg.cap.expect("validated");
    let mut rows = Vec::new();
    for n in cfg.segments_for(spec) {
        let len = weights::component_block_length(spec, n);
        let a = weights::component_spectrum(spec, n, cap.min(len)).map_err(|e| e.to_string())?;
        let avg = weights::ensemble_avg_single_edge(&a, spec.dv);
        for w in 0..=a.cap() {
            rows.push(vec![
                ("segments", json!(n)),
                ("block_length", json!(len)),
                ("w", json!(w)),
                ("ln_component", finite(a.log_count(w))),
                ("ln_ensemble_average", finite(avg.log_count(w))),
            ]);
        }
    }
    Ok(rows)
}

/// `-inf` (an empty weight class) becomes a blank cell.
fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn transfer_rows(cfg: &JobConfig, spec: &EnsembleSpec) -> Result<Vec<Row>, String> {
    let Component::Conv(g) = spec.component else {
        return Err("transfer functions need a convolutional component".into());
    };
    let trellis = Trellis::build(&g);
    let tf = TransferFunction::from_trellis(&trellis).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for (i, &(q_s, q_p)) in cfg.points.iter().enumerate() {
        let (p_s, p_p) = tf.eval(q_s, q_p).map_err(|e| e.to_string())?;
        let mut row: Row = vec![("q_s", json!(q_s)), ("q_p", json!(q_p)), ("p_s", json!(p_s)), ("p_p", json!(p_p))];
        if let Some(sections) = cfg.mc_sections {
            let seed = point_seed(cfg.seed, &g, i);
            let mc = mc_transfer_oracle(&trellis, q_s, q_p, sections, seed);
            row.extend([
                ("mc_p_s", json!(mc.p_s)),
                ("mc_std_err_s", json!(mc.std_err_s)),
                ("mc_p_p", json!(mc.p_p)),
                ("mc_std_err_p", json!(mc.std_err_p)),
                ("mc_sections", json!(sections)),
            ]);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Independent, reproducible stream per (generator, point).
fn point_seed(seed: u64, g: &GeneratorSpec, index: usize) -> u64 {
    let tag = ((g.feedforward() as u64) << 40) ^ ((g.feedback() as u64) << 20) ^ index as u64;
    seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
