use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use wavebct::certify::{certify_against_oracle, classify_generator, BoundaryConditionSpec, GenerationVerdict};
use wavebct::config::parse_config;
use wavebct::numerics::DenseMatrix;
use wavebct::report::{emit_report, read_matrix_csv, to_stable_json, write_matrix_csv};
use wavebct::sim::{audit_energy_balance, simulate, sweep, SimulationTrace, Variation};
use wavebct::{Error, Result};

#[derive(Parser)]
#[command(name = "wavebct", version, about = "Boundary condition certification and passive wave simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the boundary condition W1 B0 x + W2 B⊥ x = 0.
    Certify {
        #[arg(long)]
        w1: PathBuf,
        #[arg(long)]
        w2: PathBuf,
        /// Model config whose grid and material drive the exponential oracle.
        #[arg(long)]
        oracle: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assemble the system and write its matrices and manifest.
    Build {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        emit_matrices: PathBuf,
    },
    /// Integrate a configured model and write the trace CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply the external Cayley transform to the signals of a trace.
    Cayley {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the energy balance of a trace against its model.
    Audit {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid of config variations.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `dotted.key=V1,V2,...`; repeat for a product grid.
        #[arg(long)]
        vary: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn output(value: &Value, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => emit_report(value, p),
        None => {
            print!("{}", to_stable_json(value));
            Ok(())
        }
    }
}

fn matrix_json(m: &DenseMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array(m.row(i).iter().map(|&v| json!(v)).collect()))
            .collect(),
    )
}

fn verdict_json(v: &GenerationVerdict) -> Value {
    json!({
        "classification": v.classification.as_str(),
        "sum_injective": v.sum_injective,
        "symmetrized_psd": v.symmetrized_psd,
        "symmetrized_zero": v.symmetrized_zero,
        "kernel_dissipative": v.kernel_dissipative,
        "kernel_skew": v.kernel_skew,
        "v": v.v.as_ref().map(matrix_json),
        "v_norm": v.v_norm(),
        "diagnostics": v.diagnostics,
    })
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Certify { w1, w2, oracle, tol, out } => {
            let spec = BoundaryConditionSpec::new(read_matrix_csv(&w1)?, read_matrix_csv(&w2)?)?;
            let mut report = verdict_json(&classify_generator(&spec, tol));
            let mut code = 0;
            if let Some(cfg) = oracle {
                let model = parse_config(&cfg)?.build()?;
                let r = certify_against_oracle(&spec, &model.triplet, &model.hamiltonian()?, tol)?;
                report["oracle"] = json!({
                    "max_norm": r.max_norm,
                    "contraction": r.certificate.pass,
                    "verdict_agrees": r.verdict_agrees,
                    "samples": r.certificate.samples.iter().map(|&(t, n)| json!([t, n])).collect::<Vec<_>>(),
                });
                if !r.verdict_agrees {
                    code = 2;
                }
            }
            output(&report, out.as_deref())?;
            Ok(code)
        }
        Command::Build { config, emit_matrices } => {
            let model = parse_config(&config)?.build()?;
            std::fs::create_dir_all(&emit_matrices).map_err(|e| Error::io(&emit_matrices, e))?;
            let s = &model.system;
            for (name, m) in [("A", &s.a), ("B", &s.b_in), ("C", &s.c_out), ("D", &s.d_out)] {
                write_matrix_csv(m, &emit_matrices.join(format!("{name}.csv")))?;
            }
            let w = DenseMatrix::from_column_slice(s.energy_weight.len(), 1, s.energy_weight.as_slice());
            write_matrix_csv(&w, &emit_matrices.join("energy_weight.csv"))?;
            emit_report(&s.manifest(), &emit_matrices.join("manifest.json"))?;
            Ok(0)
        }
        Command::Simulate { config, out } => {
            let model = parse_config(&config)?.build()?;
            let trace = simulate(&model.system, &model.simulation)?;
            trace.write_csv(&out)?;
            let mut files = vec![out.display().to_string()];
            if !trace.snapshots.is_empty() {
                files.extend(trace.write_snapshots(&out)?.iter().map(|p| p.display().to_string()));
            }
            output(
                &json!({
                    "config_hash": trace.config_hash,
                    "steps": trace.steps(),
                    "final_energy": trace.energy.last().copied(),
                    "files": files,
                }),
                None,
            )?;
            Ok(0)
        }
        Command::Cayley { trace, out } => {
            // representation only selects the label; the transform is an involution
            let t = SimulationTrace::read_csv(&trace, Default::default())?;
            t.cayley()?.write_csv(&out)?;
            Ok(0)
        }
        Command::Audit { trace, config, out } => {
            let model = parse_config(&config)?.build()?;
            let t = SimulationTrace::read_csv(&trace, model.system.representation)?;
            let audit = audit_energy_balance(&t, &model.system)?;
            output(&serde_json::to_value(&audit)?, out.as_deref())?;
            Ok(if audit.pass { 0 } else { 2 })
        }
        Command::Sweep { config, vary, out } => {
            let text = std::fs::read_to_string(&config).map_err(|e| Error::io(&config, e))?;
            let base: Value = serde_json::from_str(&text)?;
            let axes = vary.iter().map(|v| parse_vary(v)).collect::<Result<Vec<_>>>()?;
            let variations = Variation::grid(&axes);
            let dir = config.parent().map(Path::to_path_buf).unwrap_or_default();
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let runs = sweep(&base, &dir, &variations);
            let mut code = 0u8;
            let mut entries = Vec::new();
            for (i, run) in runs.iter().enumerate() {
                let overrides: serde_json::Map<String, Value> =
                    run.variation.overrides.iter().cloned().collect();
                let entry = match &run.result {
                    Ok((_, trace, audit)) => {
                        let path = out.join(format!("run_{i:03}.csv"));
                        trace.write_csv(&path)?;
                        json!({
                            "index": i,
                            "overrides": overrides,
                            "status": "ok",
                            "trace": path.file_name().map(|f| f.to_string_lossy().to_string()),
                            "audit": serde_json::to_value(audit)?,
                        })
                    }
                    Err(e) => {
                        code = code.max(e.exit_code() as u8);
                        json!({
                            "index": i,
                            "overrides": overrides,
                            "status": "error",
                            "error": e.to_string(),
                        })
                    }
                };
                entries.push(entry);
            }
            emit_report(&json!({ "runs": entries }), &out.join("summary.json"))?;
            Ok(code)
        }
    }
}

/// `key=v1,v2,...` where each value is JSON if it parses and a string
/// otherwise. Commas inside brackets or braces do not split.
fn parse_vary(arg: &str) -> Result<(String, Vec<Value>)> {
    let (key, list) = arg
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("--vary expects KEY=V1,V2,..., got `{arg}`")))?;
    let mut values = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in list.char_indices() {
        match ch {
            '[' | '{' => depth += 1,
            ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                values.push(&list[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    values.push(&list[start..]);
    let values = values
        .into_iter()
        .map(|v| serde_json::from_str(v.trim()).unwrap_or_else(|_| Value::String(v.trim().to_string())))
        .collect();
    Ok((key.trim().to_string(), values))
}
