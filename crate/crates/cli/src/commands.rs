use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use affdim_core::hausdorff::{dim_h, holder_gap};
use affdim_core::higher_order::{affected_density, dim_gap_empirical, GrowthMap, HigherOrderSystem};
use affdim_core::lattice::{decompose, empirical_census};
use affdim_core::measures::{empirical_local_dimension, PrefixMeasure};
use affdim_core::minkowski::{dim_m, dim_m_empirical, log_count, pattern_count_exact};
use affdim_core::oracle::brute_force_count;
use affdim_core::{AffineSystem, Error, SystemSpec};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::cli::{
    BillingsleyArgs, Command, CountArgs, DecomposeArgs, DimArgs, Format, HigherOrderArgs, Kind, SampleArgs, SweepArgs,
    VerifyArgs,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug)]
pub enum Failure {
    /// Bad input: exit status 1.
    Validation(String),
    /// An iterative method failed or results disagree: exit status 2.
    Numerical(String),
}

impl Failure {
    pub fn status(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Numerical(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(msg) | Failure::Numerical(msg) => f.write_str(msg),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("malformed JSON in {}: {e}", path.display())))
}

fn load_system(path: &Path) -> Result<(SystemSpec, AffineSystem), Failure> {
    let spec: SystemSpec = read_json(path)?;
    let sys = spec.to_system()?;
    Ok((spec, sys))
}

fn envelope(config: Value) -> serde_json::Map<String, Value> {
    let mut out = serde_json::Map::new();
    out.insert("version".into(), json!(VERSION));
    out.insert("config".into(), config);
    out
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn emit(value: &Value) -> Outcome {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Dim(args) => dim(args),
        Command::Decompose(args) => decompose_cmd(args),
        Command::Count(args) => count(args),
        Command::Verify(args) => verify(args),
        Command::Sample(args) => sample(args),
        Command::Billingsley(args) => billingsley(args),
        Command::Sweep(args) => sweep(args),
        Command::HigherOrder(args) => higher_order(args),
    }
}

fn dim(args: DimArgs) -> Outcome {
    let (spec, sys) = load_system(&args.system.system)?;
    let mut out = envelope(json!({"command": "dim", "system": spec, "kind": args.kind, "tol": args.tol}));
    match args.kind {
        Kind::Minkowski => {
            out.insert("minkowski".into(), to_value(&dim_m(&sys, args.tol)?));
        }
        Kind::Hausdorff => {
            out.insert("hausdorff".into(), to_value(&dim_h(&sys, args.tol)?));
        }
        Kind::Both => {
            let g = holder_gap(&sys, args.tol)?;
            out.insert("minkowski".into(), to_value(&g.dim_m));
            out.insert("hausdorff".into(), to_value(&g.dim_h));
            out.insert("gap".into(), json!({"value": g.gap, "tolerance": g.tolerance}));
        }
    }
    emit(&Value::Object(out))
}

fn decompose_cmd(args: DecomposeArgs) -> Outcome {
    let (spec, sys) = load_system(&args.system.system)?;
    let config = json!({"command": "decompose", "system": spec, "n": args.n, "census": args.census});
    if args.census {
        let census = empirical_census(args.n, &sys);
        let mut out = envelope(config);
        let l: Vec<Value> = census.l.iter().map(|(&(i, j), &c)| json!([i, j, c])).collect();
        let d: Vec<Value> = census.d.iter().map(|(&l, &c)| json!([l, c])).collect();
        out.insert("L".into(), Value::Array(l));
        out.insert("D".into(), Value::Array(d));
        out.insert("self_loops".into(), json!(census.self_loops));
        return emit(&Value::Object(out));
    }
    let dec = decompose(args.n, &sys);
    let mut header = envelope(config);
    header.insert("chains".into(), json!(dec.chains.len()));
    let mut out = BufWriter::new(io::stdout().lock());
    serde_json::to_writer(&mut out, &Value::Object(header)).map_err(io::Error::from)?;
    writeln!(out)?;
    for chain in &dec.chains {
        let line = json!({"start": chain.start(), "positions": chain.positions, "full_length": chain.full_length});
        serde_json::to_writer(&mut out, &line).map_err(io::Error::from)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn count(args: CountArgs) -> Outcome {
    let (spec, sys) = load_system(&args.system.system)?;
    let exact = pattern_count_exact(args.n, &sys)?;
    let log_m = log_count(&exact, sys.m());
    let mut out = envelope(json!({"command": "count", "system": spec, "n": args.n}));
    out.insert("n".into(), json!(args.n));
    out.insert("count".into(), json!(exact.to_string()));
    out.insert("log_m_count".into(), json!(log_m));
    out.insert("log_m_count_per_n".into(), json!(log_m / args.n as f64));
    emit(&Value::Object(out))
}

fn verify(args: VerifyArgs) -> Outcome {
    let (spec, sys) = load_system(&args.system.system)?;
    let max_n = usize::try_from(args.max_n).map_err(|_| Failure::Validation("max-n too large".into()))?;
    let mut rows = Vec::new();
    let mut all_equal = true;
    for n in 1..=max_n {
        let oracle = brute_force_count(n, &sys, &[])?.count;
        let formula = pattern_count_exact(n as u64, &sys)?;
        let equal = oracle == formula;
        all_equal &= equal;
        rows.push(json!({"n": n, "oracle_count": oracle.to_string(), "formula_count": formula.to_string(), "equal": equal}));
    }
    let mut out = envelope(json!({"command": "verify", "system": spec, "max_n": args.max_n}));
    out.insert("rows".into(), Value::Array(rows));
    out.insert("all_equal".into(), json!(all_equal));
    emit(&Value::Object(out))?;
    if all_equal {
        Ok(())
    } else {
        Err(Failure::Numerical("enumeration and chain-product counts disagree".into()))
    }
}

fn sample(args: SampleArgs) -> Outcome {
    let (spec, sys) = load_system(&args.system.system)?;
    if sys.m() > 10 {
        return Err(Failure::Validation(format!("one digit per symbol needs m ≤ 10, got {}", sys.m())));
    }
    let measure = PrefixMeasure::new(&sys, args.n)?;
    let word = measure.sample(args.seed);
    let cost = measure.neg_log_prob(&word)?;
    let mut sidecar = envelope(json!({"command": "sample", "system": spec, "n": args.n, "seed": args.seed}));
    sidecar.insert("neg_log_prob_per_n".into(), json!(cost / args.n as f64));
    let sidecar = serde_json::to_string(&Value::Object(sidecar)).expect("sidecar serializes");
    let digits: String = word.iter().map(|&x| char::from(b'0' + x)).collect();
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "{digits}")?;
    match &args.sidecar {
        Some(path) => fs::write(path, format!("{sidecar}\n"))?,
        None => writeln!(out, "{sidecar}")?,
    }
    out.flush()?;
    Ok(())
}

fn billingsley(args: BillingsleyArgs) -> Outcome {
    let (spec, sys) = load_system(&args.system.system)?;
    if args.samples == 0 {
        return Err(Failure::Validation("samples must be at least 1".into()));
    }
    let target = dim_h(&sys, args.tol)?;
    let (mean, stderr) = empirical_local_dimension(&sys, args.n, args.seed, args.samples)?;
    let mut out = envelope(json!({
        "command": "billingsley", "system": spec, "n": args.n, "samples": args.samples, "seed": args.seed, "tol": args.tol
    }));
    out.insert("mean".into(), json!(mean));
    out.insert("stderr".into(), json!(stderr));
    out.insert("difference".into(), json!(mean - target.value));
    out.insert("hausdorff".into(), to_value(&target));
    emit(&Value::Object(out))
}

fn csv_preamble(out: &mut impl Write, config: &Value) -> io::Result<()> {
    writeln!(out, "# affdim {VERSION}")?;
    writeln!(out, "# config: {config}")
}

fn csv_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn sweep(args: SweepArgs) -> Outcome {
    let (spec, sys) = load_system(&args.system.system)?;
    let config = json!({
        "command": "sweep", "system": spec, "kind": args.kind, "n_grid": args.n_grid, "tol": args.tol,
        "samples": args.samples, "seed": args.seed, "format": args.format
    });
    let (closed, tolerance) = match args.kind {
        Kind::Minkowski => {
            let r = dim_m(&sys, args.tol)?;
            (r.value, r.tolerance)
        }
        Kind::Hausdorff => {
            if args.samples == 0 {
                return Err(Failure::Validation("samples must be at least 1".into()));
            }
            let r = dim_h(&sys, args.tol)?;
            (r.value, r.tolerance)
        }
        Kind::Both => return Err(Failure::Validation("sweep needs --kind minkowski or --kind hausdorff".into())),
    };
    let rows = args
        .n_grid
        .par_iter()
        .map(|&n| {
            let empirical = match args.kind {
                Kind::Minkowski => dim_m_empirical(n, &sys),
                _ => empirical_local_dimension(&sys, n, args.seed, args.samples)?.0,
            };
            Ok((n, empirical))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    match args.format {
        Format::Json => {
            let mut out = envelope(config);
            out.insert("closed_form_tolerance".into(), json!(tolerance));
            let rows: Vec<Value> = rows
                .iter()
                .map(|&(n, e)| json!({"n": n, "empirical": e, "closed_form": closed, "gap": (e - closed).abs()}))
                .collect();
            out.insert("rows".into(), Value::Array(rows));
            emit(&Value::Object(out))
        }
        Format::Csv => {
            let mut out = BufWriter::new(io::stdout().lock());
            csv_preamble(&mut out, &config)?;
            writeln!(out, "# closed_form tolerance: {tolerance:e}")?;
            writeln!(out, "n,empirical,closed_form,gap")?;
            for (n, e) in rows {
                writeln!(out, "{n},{e},{closed},{}", (e - closed).abs())?;
            }
            out.flush()?;
            Ok(())
        }
    }
}

fn higher_order(args: HigherOrderArgs) -> Outcome {
    let spec: SystemSpec = read_json(&args.system.system)?;
    let forbidden: Vec<Vec<u8>> = read_json(&args.forbidden)?;
    let maps = args
        .maps
        .iter()
        .map(|s| s.parse::<GrowthMap>())
        .collect::<Result<Vec<_>, Error>>()?;
    let hos = HigherOrderSystem::new(spec.p, spec.q, spec.a, spec.b, spec.m, forbidden.clone(), maps)?;
    let derived = hos.base.matrix().rows();
    let config = json!({
        "command": "higher-order", "system": spec, "f": args.maps, "forbidden": forbidden,
        "n_grid": args.n_grid, "format": args.format, "base_matrix": derived
    });
    let rows = args
        .n_grid
        .par_iter()
        .map(|&n| {
            let (measured, bound) = affected_density(n, &hos)?;
            let gap = match dim_gap_empirical(n as usize, &hos) {
                Ok(g) => Some(g),
                Err(Error::WindowTooLarge { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok((n, measured, bound, gap))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    match args.format {
        Format::Json => {
            let mut out = envelope(config);
            let rows: Vec<Value> = rows
                .iter()
                .map(|&(n, measured, bound, gap)| json!({"n": n, "measured": measured, "bound": bound, "empirical_gap": gap}))
                .collect();
            out.insert("rows".into(), Value::Array(rows));
            emit(&Value::Object(out))
        }
        Format::Csv => {
            let mut out = BufWriter::new(io::stdout().lock());
            csv_preamble(&mut out, &config)?;
            writeln!(out, "n,measured,bound,empirical_gap")?;
            for (n, measured, bound, gap) in rows {
                writeln!(out, "{n},{measured},{bound},{}", csv_cell(gap))?;
            }
            out.flush()?;
            Ok(())
        }
    }
}
